//! Destination grid: buildings clustered with bisecting k-means, coarser the
//! farther a building lies from the focus area.
//!
//! Destination sampling is two-stage: a cell is drawn from the MNL over cell
//! aggregates, then a member building by its own attraction.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityType, PerPurpose};
use crate::building::{Building, N_FEATURES};
use crate::choice::DestinationModel;
use crate::error::{Error, Result};
use crate::geo::{FocusIndex, LonLat};
use crate::stats::Cumulative;

/// Default dispersion threshold of the innermost tier, meters.
pub const DEFAULT_THRESHOLD_M: f64 = 150.0;
/// Width of each distance band around the focus area, meters.
pub const TIER_WIDTH_M: f64 = 10_000.0;

struct Cluster {
    members: Vec<usize>,
    centroid: [f64; 2],
    /// Σ ‖p − centroid‖ over members.
    dispersion: f64,
}

impl Cluster {
    fn new(points: &[[f64; 2]], members: Vec<usize>) -> Self {
        let centroid = mean_of(points, &members);
        let dispersion = members.iter().map(|&i| dist(points[i], centroid)).sum();
        Cluster {
            members,
            centroid,
            dispersion,
        }
    }
}

impl PartialEq for Cluster {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cluster {}

impl PartialOrd for Cluster {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cluster {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dispersion
            .total_cmp(&other.dispersion)
            .then_with(|| other.members[0].cmp(&self.members[0]))
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn mean_of(points: &[[f64; 2]], members: &[usize]) -> [f64; 2] {
    let mut c = [0.0, 0.0];
    for &i in members {
        c[0] += points[i][0];
        c[1] += points[i][1];
    }
    let n = members.len().max(1) as f64;
    [c[0] / n, c[1] / n]
}

fn farthest_from(points: &[[f64; 2]], members: &[usize], from: [f64; 2]) -> usize {
    let mut best = members[0];
    let mut bd = -1.0;
    for &i in members {
        let d = dist(points[i], from);
        if d > bd {
            bd = d;
            best = i;
        }
    }
    best
}

/// 2-means on one cluster, seeded with an approximately farthest pair (the
/// point farthest from the centroid, then the point farthest from that one).
/// `None` if the members cannot be separated.
fn bisect(points: &[[f64; 2]], c: &Cluster) -> Option<(Cluster, Cluster)> {
    let a = farthest_from(points, &c.members, c.centroid);
    let b = farthest_from(points, &c.members, points[a]);
    if dist(points[a], points[b]) == 0.0 {
        return None;
    }
    let (mut ca, mut cb) = (points[a], points[b]);
    let mut side = vec![false; c.members.len()];
    for iter in 0..100 {
        let mut changed = false;
        for (k, &i) in c.members.iter().enumerate() {
            let to_b = dist(points[i], cb) < dist(points[i], ca);
            if to_b != side[k] || iter == 0 {
                changed |= to_b != side[k];
                side[k] = to_b;
            }
        }
        if iter > 0 && !changed {
            break;
        }
        let (mut sa, mut sb) = ([0.0; 2], [0.0; 2]);
        let (mut na, mut nb) = (0usize, 0usize);
        for (k, &i) in c.members.iter().enumerate() {
            let (s, n) = if side[k] { (&mut sb, &mut nb) } else { (&mut sa, &mut na) };
            s[0] += points[i][0];
            s[1] += points[i][1];
            *n += 1;
        }
        if na == 0 || nb == 0 {
            break;
        }
        ca = [sa[0] / na as f64, sa[1] / na as f64];
        cb = [sb[0] / nb as f64, sb[1] / nb as f64];
    }
    let (mut ma, mut mb) = (Vec::new(), Vec::new());
    for (k, &i) in c.members.iter().enumerate() {
        if side[k] {
            mb.push(i);
        } else {
            ma.push(i);
        }
    }
    if ma.is_empty() || mb.is_empty() {
        return None;
    }
    Some((Cluster::new(points, ma), Cluster::new(points, mb)))
}

/// Bisecting k-means: repeatedly splits the cluster with the largest total
/// dispersion until the mean point-to-centroid distance over all points is
/// below `threshold`. Deterministic; clusters are returned with members in
/// ascending order, sorted by their smallest member.
pub fn bisecting_kmeans(points: &[[f64; 2]], threshold: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let n = points.len() as f64;
    let root = Cluster::new(points, (0..points.len()).collect());
    let mut total = root.dispersion;
    let mut heap = BinaryHeap::new();
    heap.push(root);
    let mut frozen = Vec::new();
    while total / n >= threshold {
        let Some(c) = heap.pop() else { break };
        match bisect(points, &c) {
            Some((a, b)) => {
                total += a.dispersion + b.dispersion - c.dispersion;
                heap.push(a);
                heap.push(b);
            }
            None => frozen.push(c),
        }
    }
    let mut out: Vec<Vec<usize>> = heap
        .into_iter()
        .chain(frozen)
        .map(|c| {
            let mut m = c.members;
            m.sort_unstable();
            m
        })
        .collect();
    out.sort_unstable_by_key(|m| m[0]);
    out
}

/// Mean distance between each point and its cluster centroid.
pub fn mean_dispersion(points: &[[f64; 2]], clusters: &[Vec<usize>]) -> f64 {
    let n: usize = clusters.iter().map(|c| c.len()).sum();
    if n == 0 {
        return 0.0;
    }
    let s: f64 = clusters
        .iter()
        .map(|c| {
            let m = mean_of(points, c);
            c.iter().map(|&i| dist(points[i], m)).sum::<f64>()
        })
        .sum();
    s / n as f64
}

/// Tier of a building at `distance_m` from the focus area: 0 inside, `k` for
/// distances in `[10(k−1), 10k)` km.
pub fn tier_for_distance(distance_m: f64) -> u32 {
    if distance_m <= 0.0 {
        0
    } else {
        (distance_m / TIER_WIDTH_M).floor() as u32 + 1
    }
}

/// Dispersion threshold of a tier: `base · 2^tier`.
pub fn tier_threshold(base: f64, tier: u32) -> f64 {
    base * 2f64.powi(tier as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub id: u32,
    pub tier: u32,
    /// Indices into the building list the grid was built from.
    pub members: Vec<u32>,
    /// Unweighted mean of member coordinates.
    pub centroid: LonLat,
    /// Member features summed.
    pub features: [f64; N_FEATURES],
    /// Σ member attraction per purpose.
    pub attraction: PerPurpose<f64>,
}

/// Cells plus the per-building data needed for stage-two sampling.
#[derive(Clone, Debug)]
pub struct Grid {
    cells: Vec<GridCell>,
    cell_of: Vec<u32>,
    cell_attraction: PerPurpose<Vec<f64>>,
    member_cdf: PerPurpose<Vec<Cumulative>>,
}

impl Grid {
    /// Clusters `buildings` tier by tier. Tier 0 are buildings inside the
    /// focus area; buffer buildings are banded by their distance to it.
    pub fn build(buildings: &[Building], focus: &FocusIndex, base_threshold: f64, model: &DestinationModel) -> Result<Grid> {
        if buildings.is_empty() {
            return Err(Error::EmptyModel);
        }
        if !(base_threshold > 0.0) {
            return Err(Error::arg("grid threshold must be positive"));
        }
        let proj = focus.projection();
        let tiers: Vec<u32> = buildings
            .iter()
            .map(|b| tier_for_distance(focus.distance_m(b.coordinates)))
            .collect();
        let max_tier = *tiers.iter().max().unwrap();
        let mut assignment = Vec::new();
        for tier in 0..=max_tier {
            let idx: Vec<usize> = (0..buildings.len()).filter(|&i| tiers[i] == tier).collect();
            if idx.is_empty() {
                continue;
            }
            let pts: Vec<[f64; 2]> = idx.iter().map(|&i| proj.project(buildings[i].coordinates)).collect();
            for cluster in bisecting_kmeans(&pts, tier_threshold(base_threshold, tier)) {
                assignment.push((tier, cluster.into_iter().map(|k| idx[k] as u32).collect()));
            }
        }
        Grid::from_assignment(buildings, assignment, model)
    }

    /// Grid from explicit `(tier, members)` cells, e.g. a persisted grid
    /// re-attached to a different set of coefficients.
    pub fn from_assignment(buildings: &[Building], cells: Vec<(u32, Vec<u32>)>, model: &DestinationModel) -> Result<Grid> {
        let mut cell_of = vec![u32::MAX; buildings.len()];
        let mut out = Vec::with_capacity(cells.len());
        for (id, (tier, members)) in cells.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Schema("grid cell without members".into()));
            }
            let (mut lon, mut lat) = (0.0, 0.0);
            let mut features = [0.0; N_FEATURES];
            for &m in &members {
                let b = buildings
                    .get(m as usize)
                    .ok_or_else(|| Error::Schema("grid cell references an unknown building".into()))?;
                if cell_of[m as usize] != u32::MAX {
                    return Err(Error::Schema("building assigned to two grid cells".into()));
                }
                cell_of[m as usize] = id as u32;
                lon += b.coordinates.lon;
                lat += b.coordinates.lat;
                for (f, x) in features.iter_mut().zip(b.features()) {
                    *f += x;
                }
            }
            let k = members.len() as f64;
            out.push(GridCell {
                id: id as u32,
                tier,
                centroid: LonLat::new(lon / k, lat / k),
                members,
                features,
                attraction: PerPurpose::default(),
            });
        }
        if cell_of.iter().any(|&c| c == u32::MAX) {
            return Err(Error::Schema("building not covered by any grid cell".into()));
        }
        let mut grid = Grid {
            cells: out,
            cell_of,
            cell_attraction: PerPurpose::default(),
            member_cdf: PerPurpose::default(),
        };
        grid.attach_model(buildings, model);
        Ok(grid)
    }

    /// Recomputes aggregated and per-building attractions for `model`.
    pub fn attach_model(&mut self, buildings: &[Building], model: &DestinationModel) {
        for p in ActivityType::ALL {
            let mut agg = Vec::with_capacity(self.cells.len());
            let mut cdfs = Vec::with_capacity(self.cells.len());
            for cell in &mut self.cells {
                let a: Vec<f64> = cell
                    .members
                    .iter()
                    .map(|&m| model.attraction(&buildings[m as usize], p))
                    .collect();
                let total: f64 = a.iter().sum();
                cell.attraction[p] = total;
                agg.push(total);
                // attraction is ≥ 1, so the distribution is never empty
                cdfs.push(Cumulative::new(a).expect("positive attraction"));
            }
            self.cell_attraction[p] = agg;
            self.member_cdf[p] = cdfs;
        }
    }

    pub fn cells(&self) -> &[GridCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, building: usize) -> usize {
        self.cell_of[building] as usize
    }

    pub fn centroids(&self) -> Vec<LonLat> {
        self.cells.iter().map(|c| c.centroid).collect()
    }

    pub fn cell_attraction(&self, purpose: ActivityType) -> &[f64] {
        &self.cell_attraction[purpose]
    }

    /// Stage two: building index drawn from `cell` with `P(b) ∝ A_b`.
    pub fn sample_member<R: rand::Rng + ?Sized>(&self, cell: usize, purpose: ActivityType, rng: &mut R) -> usize {
        let k = self.member_cdf[purpose][cell].sample(rng);
        self.cells[cell].members[k] as usize
    }

    /// Probability of `building` within its own cell.
    pub fn member_probability(&self, building: usize, purpose: ActivityType) -> f64 {
        let c = self.cell_of(building);
        let k = self.cells[c]
            .members
            .iter()
            .position(|&m| m as usize == building)
            .unwrap();
        self.member_cdf[purpose][c].probability(k)
    }
}
