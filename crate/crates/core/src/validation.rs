//! Comparison of generated demand with a reference survey.
//!
//! Zonal and OD shares are compared with the coefficient of determination,
//! the mean absolute error in percentage points and the Jensen–Shannon
//! divergence (natural log). Validation zones form a regular lattice in the
//! local projected frame, anchored at the lower-left corner of the bounding
//! box of all trip end points.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityType;
use crate::error::{Error, Result};
use crate::geo::{LocalProjection, LonLat};
use crate::routing::Router;
use crate::schedule::MINUTES_PER_DAY;
use crate::stats::{jensen_shannon, mean, quantile_sorted, std_dev};

/// Resolutions of the validation lattices, meters.
pub const RESOLUTIONS_M: [f64; 3] = [500.0, 1000.0, 5000.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trip {
    pub purpose: ActivityType,
    pub origin: LonLat,
    pub destination: LonLat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub r2: f64,
    /// Mean absolute share difference, percentage points.
    pub mae: f64,
    pub jensen_shannon: f64,
    /// Zones (or zone pairs) with at least one trip in either set.
    pub zones: usize,
}

/// Coefficient of determination with `target` as the reference; negative
/// when `pred` is worse than the target mean.
pub fn r_squared(pred: &[f64], target: &[f64]) -> f64 {
    let m = mean(target);
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = target.iter().map(|t| (t - m) * (t - m)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Metrics between two share vectors on the same support.
pub fn compare_shares(model: &[f64], survey: &[f64]) -> MetricReport {
    let mae = if model.is_empty() {
        0.0
    } else {
        100.0 * model.iter().zip(survey).map(|(a, b)| (a - b).abs()).sum::<f64>() / model.len() as f64
    };
    MetricReport {
        r2: r_squared(model, survey),
        mae,
        jensen_shannon: jensen_shannon(model, survey),
        zones: model.len(),
    }
}

/// Regular square lattice over the projected plane.
#[derive(Clone, Copy, Debug)]
pub struct ZoneLattice {
    proj: LocalProjection,
    origin: [f64; 2],
    resolution: f64,
}

impl ZoneLattice {
    /// Lattice anchored at the bounding box of `points`.
    pub fn covering(points: impl IntoIterator<Item = LonLat> + Clone, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::arg("zone resolution must be positive"));
        }
        let proj = LocalProjection::centered_on(points.clone());
        let mut origin = [f64::INFINITY; 2];
        for p in points {
            let xy = proj.project(p);
            origin[0] = origin[0].min(xy[0]);
            origin[1] = origin[1].min(xy[1]);
        }
        if !origin[0].is_finite() {
            return Err(Error::arg("no points to anchor the validation lattice"));
        }
        Ok(ZoneLattice {
            proj,
            origin,
            resolution,
        })
    }

    pub fn zone(&self, p: LonLat) -> (i64, i64) {
        let xy = self.proj.project(p);
        (
            ((xy[0] - self.origin[0]) / self.resolution).floor() as i64,
            ((xy[1] - self.origin[1]) / self.resolution).floor() as i64,
        )
    }
}

fn shares<K: Ord + Copy>(model: impl Iterator<Item = K>, survey: impl Iterator<Item = K>) -> (Vec<f64>, Vec<f64>) {
    let mut counts: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    for k in model {
        counts.entry(k).or_default().0 += 1.0;
    }
    for k in survey {
        counts.entry(k).or_default().1 += 1.0;
    }
    let (tm, ts) = counts.values().fold((0.0, 0.0), |a, v| (a.0 + v.0, a.1 + v.1));
    counts.values().map(|v| (v.0 / tm, v.1 / ts)).unzip()
}

fn lattice_for(model: &[Trip], survey: &[Trip], resolution: f64) -> Result<ZoneLattice> {
    if model.is_empty() || survey.is_empty() {
        return Err(Error::arg("trip sets must not be empty"));
    }
    let pts = model
        .iter()
        .chain(survey)
        .flat_map(|t| [t.origin, t.destination]);
    ZoneLattice::covering(pts, resolution)
}

/// Share of trips ending in each zone, model against survey.
pub fn zonal_attraction(model: &[Trip], survey: &[Trip], resolution: f64) -> Result<MetricReport> {
    let lat = lattice_for(model, survey, resolution)?;
    let (m, s) = shares(
        model.iter().map(|t| lat.zone(t.destination)),
        survey.iter().map(|t| lat.zone(t.destination)),
    );
    Ok(compare_shares(&m, &s))
}

/// Share of trips per (origin zone, destination zone) pair.
pub fn od_metrics(model: &[Trip], survey: &[Trip], resolution: f64) -> Result<MetricReport> {
    let lat = lattice_for(model, survey, resolution)?;
    let (m, s) = shares(
        model.iter().map(|t| (lat.zone(t.origin), lat.zone(t.destination))),
        survey.iter().map(|t| (lat.zone(t.origin), lat.zone(t.destination))),
    );
    Ok(compare_shares(&m, &s))
}

/// One activity of a day with its resolved position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stop {
    pub kind: ActivityType,
    /// `None` for the final activity of the day.
    pub stay_minutes: Option<f64>,
    pub location: LonLat,
}

/// Trips of one day: each consecutive pair of stops is a trip whose purpose
/// is the destination activity.
pub fn day_trips(day: &[Stop]) -> impl Iterator<Item = Trip> + '_ {
    day.windows(2).map(|w| Trip {
        purpose: w[1].kind,
        origin: w[0].location,
        destination: w[1].location,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    /// Agent-days.
    pub n: usize,
    pub q25_km: f64,
    pub median_km: f64,
    pub q75_km: f64,
    pub mean_km: f64,
    /// Half width of the normal-approximation 95 % interval of the mean.
    pub ci95_km: f64,
}

/// Routed kilometers per agent-day.
pub fn day_distances_km<R: Router + ?Sized>(days: &[Vec<Stop>], router: &R) -> Vec<f64> {
    days.iter()
        .map(|d| {
            d.windows(2)
                .map(|w| {
                    if w[0].location == w[1].location {
                        0.0
                    } else {
                        router.route(w[0].location, w[1].location).distance_m
                    }
                })
                .sum::<f64>()
                / 1000.0
        })
        .collect()
}

pub fn summarize_distances(mut km: Vec<f64>) -> DistanceSummary {
    km.sort_by(f64::total_cmp);
    let n = km.len();
    let sd = std_dev(&km);
    DistanceSummary {
        n,
        q25_km: quantile_sorted(&km, 0.25),
        median_km: quantile_sorted(&km, 0.5),
        q75_km: quantile_sorted(&km, 0.75),
        mean_km: mean(&km),
        ci95_km: if n > 0 { 1.96 * sd / (n as f64).sqrt() } else { 0.0 },
    }
}

pub fn daily_distance<R: Router + ?Sized>(days: &[Vec<Stop>], router: &R) -> DistanceSummary {
    summarize_distances(day_distances_km(days, router))
}

/// Index of the "moving" state in temporal share vectors; activities use
/// [`ActivityType::index`].
pub const MOVING: usize = 5;

/// Timeline states of one agent over consecutive days, as
/// `(start_min, end_min, state)` intervals from midnight of day one.
pub fn agent_timeline<R: Router + ?Sized>(days: &[Vec<Stop>], router: &R) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    for (d, day) in days.iter().enumerate() {
        let day_start = d as f64 * MINUTES_PER_DAY;
        let day_end = day_start + MINUTES_PER_DAY;
        let mut t = day_start;
        for (i, s) in day.iter().enumerate() {
            let end = match s.stay_minutes {
                Some(m) => (t + m).min(day_end),
                None => day_end,
            };
            out.push((t, end.max(t), s.kind.index()));
            t = end.max(t);
            if let Some(next) = day.get(i + 1) {
                let travel = if next.location == s.location {
                    0.0
                } else {
                    router.route(s.location, next.location).duration_s / 60.0
                };
                let arrive = (t + travel).min(day_end);
                out.push((t, arrive, MOVING));
                t = arrive;
            }
        }
    }
    out
}

/// Share of agents in each of the six states (five activities plus moving)
/// at `t = 0, step, 2·step, ...` over all simulated days.
pub fn temporal_shares<R: Router + ?Sized>(agents: &[Vec<Vec<Stop>>], router: &R, step_minutes: f64) -> Result<Vec<[f64; 6]>> {
    if !(step_minutes > 0.0) {
        return Err(Error::arg("time step must be positive"));
    }
    let n_days = agents.iter().map(|a| a.len()).max().unwrap_or(0);
    let horizon = n_days as f64 * MINUTES_PER_DAY;
    let steps = (horizon / step_minutes).ceil() as usize;
    let mut counts = vec![[0.0f64; 6]; steps];
    for days in agents {
        let tl = agent_timeline(days, router);
        let mut k = 0;
        for (s, slot) in counts.iter_mut().enumerate() {
            let t = s as f64 * step_minutes;
            while k + 1 < tl.len() && tl[k].1 <= t {
                k += 1;
            }
            // zero-length intervals never cover a sample point
            let state = if tl.is_empty() { ActivityType::Home.index() } else { tl[k].2 };
            slot[state] += 1.0;
        }
    }
    let n = agents.len().max(1) as f64;
    for c in counts.iter_mut() {
        for v in c.iter_mut() {
            *v /= n;
        }
    }
    Ok(counts)
}
