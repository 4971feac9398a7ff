//! Deterrence coefficients with attraction held fixed.
//!
//! Distances are digitized into bins; per origin the attraction of all cells
//! falling into each bin is summed once. The log-likelihood of a trip from
//! `o` then reduces to `ln f(d_t) − ln Σ_b f(r_b) S_{o,b}` with `r_b` the bin
//! center and `S_{o,b}` the binned attraction sum. The dropped term
//! `Σ_t ln A_{dest}` does not depend on the deterrence coefficients.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::choice::{CellDistances, DeterrenceForm, DeterrenceParams};
use crate::error::{Error, Result};
use crate::optimize::{minimize_box, LbfgsOptions};
use crate::routing::{bin_representative, digitize_distance};
use crate::stats::{ks_statistic, Cumulative};

/// Starting point `(ϑ0, ϑ1, ϑ2)`, truncated to the form's parameter count.
pub const INITIAL_PARAMS: [f64; 3] = [-0.1, -1.0, 0.0];
/// Simulated trip distances per form for the goodness-of-fit comparison.
pub const KS_SAMPLES: usize = 100_000;

/// Binned choice sets for the trips of one purpose.
#[derive(Clone, Debug)]
pub struct BinnedChoiceSets {
    bin_width: f64,
    /// Per origin: trip count, `(bin, attraction sum)` pairs, trip bins.
    origins: Vec<OriginBins>,
    n_trips: f64,
    max_bin: usize,
}

#[derive(Clone, Debug)]
struct OriginBins {
    trips: f64,
    sets: Vec<(u32, f64)>,
    trip_bins: Vec<(u32, f64)>,
}

impl BinnedChoiceSets {
    /// `trips` are `(origin, destination)` cell pairs.
    pub fn new<D: CellDistances + ?Sized>(trips: &[(u32, u32)], cell_attraction: &[f64], distances: &D, bin_width: f64) -> Result<Self> {
        if trips.is_empty() {
            return Err(Error::FitFailed("no trips to fit deterrence on".into()));
        }
        let mut by_origin: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
        for &(o, d) in trips {
            let b = digitize_distance(distances.distance_m(o as usize, d as usize), bin_width)? as u32;
            *by_origin.entry(o).or_default().entry(b).or_insert(0.0) += 1.0;
        }
        let mut max_bin = 0;
        let mut origins = Vec::with_capacity(by_origin.len());
        for (o, trip_bins) in by_origin {
            let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
            for (j, &a) in cell_attraction.iter().enumerate() {
                if a > 0.0 {
                    let b = digitize_distance(distances.distance_m(o as usize, j), bin_width)? as u32;
                    *sums.entry(b).or_insert(0.0) += a;
                }
            }
            max_bin = max_bin.max(*sums.keys().last().unwrap_or(&0) as usize);
            max_bin = max_bin.max(*trip_bins.keys().last().unwrap_or(&0) as usize);
            origins.push(OriginBins {
                trips: trip_bins.values().sum(),
                sets: sums.into_iter().collect(),
                trip_bins: trip_bins.into_iter().collect(),
            });
        }
        Ok(BinnedChoiceSets {
            bin_width,
            origins,
            n_trips: trips.len() as f64,
            max_bin,
        })
    }

    pub fn n_trips(&self) -> f64 {
        self.n_trips
    }

    fn basis_table(&self, form: DeterrenceForm) -> Vec<[f64; 3]> {
        (0..=self.max_bin)
            .map(|b| form.basis(bin_representative(b, self.bin_width) / 1000.0))
            .collect()
    }

    /// Reduced log-likelihood (total, not per trip) and its gradient.
    fn evaluate(&self, basis: &[[f64; 3]], theta: &[f64], grad: &mut [f64]) -> f64 {
        let m = theta.len();
        let lf = |b: u32| -> f64 { (0..m).map(|i| theta[i] * basis[b as usize][i]).sum() };
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut ll = 0.0;
        let mut e = [0.0; 3];
        for o in &self.origins {
            for &(b, k) in &o.trip_bins {
                ll += k * lf(b);
                for i in 0..m {
                    grad[i] += k * basis[b as usize][i];
                }
            }
            let mx = o
                .sets
                .iter()
                .map(|&(b, s)| lf(b) + s.ln())
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            e.iter_mut().for_each(|v| *v = 0.0);
            for &(b, s) in &o.sets {
                let w = (lf(b) + s.ln() - mx).exp();
                z += w;
                for i in 0..m {
                    e[i] += w * basis[b as usize][i];
                }
            }
            ll -= o.trips * (mx + z.ln());
            for i in 0..m {
                grad[i] -= o.trips * e[i] / z;
            }
        }
        ll
    }

    /// Reduced log-likelihood of `params` (total over trips).
    pub fn log_likelihood(&self, params: &DeterrenceParams) -> f64 {
        let basis = self.basis_table(params.form);
        let mut g = vec![0.0; params.params.len()];
        self.evaluate(&basis, &params.params, &mut g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeterrenceFit {
    pub params: DeterrenceParams,
    /// Reduced log-likelihood per trip.
    pub mean_log_likelihood: f64,
}

/// Maximum-likelihood coefficients of `form`.
pub fn fit_deterrence(sets: &BinnedChoiceSets, form: DeterrenceForm) -> Result<DeterrenceFit> {
    let basis = sets.basis_table(form);
    let m = form.n_params();
    let n = sets.n_trips;
    let objective = |x: &[f64], g: &mut [f64]| {
        let ll = sets.evaluate(&basis, x, g);
        g.iter_mut().for_each(|v| *v = -*v / n);
        -ll / n
    };
    let opts = LbfgsOptions {
        max_iterations: 1000,
        gradient_tolerance: 1e-10,
        function_tolerance: 1e-15,
        ..LbfgsOptions::default()
    };
    let inf = f64::INFINITY;
    let res = minimize_box(objective, &INITIAL_PARAMS[..m], &vec![-inf; m], &vec![inf; m], &opts)?;
    Ok(DeterrenceFit {
        params: DeterrenceParams::new(form, &res.x)?,
        mean_log_likelihood: -res.value,
    })
}

/// Trip distances (m) simulated from the empirical trip origins under
/// `det`. The same `seed` gives every form the same origin draws and
/// uniforms, so differences between forms are not sampling noise.
pub fn simulate_trip_distances<D: CellDistances + ?Sized>(
    origins: &[u32],
    cell_attraction: &[f64],
    distances: &D,
    det: &DeterrenceParams,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: BTreeMap<u32, Option<Cumulative>> = BTreeMap::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let o = origins[rng.random_range(0..origins.len())];
        let u: f64 = rng.random();
        let cdf = cache.entry(o).or_insert_with(|| {
            let mut v: Vec<f64> = cell_attraction
                .iter()
                .enumerate()
                .map(|(j, &a)| {
                    if a > 0.0 {
                        a.ln() + det.log_f(distances.distance_m(o as usize, j) / 1000.0)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            crate::choice::normalize_log_weights(&mut v).ok()?;
            Cumulative::new(v)
        });
        if let Some(c) = cdf {
            out.push(distances.distance_m(o as usize, c.index_for(u)));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormSelection {
    pub chosen: DeterrenceForm,
    /// KS statistic of each fitted form against the observed distances.
    pub ks: Vec<(DeterrenceForm, f64)>,
    pub tolerance: f64,
}

/// KS distance below which two forms count as equally good: the two-sample
/// critical value at the 5 % level for sample sizes `n` and `m`.
pub fn ks_tie_tolerance(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.358 * ((n + m) / (n * m)).sqrt()
}

/// Picks the form whose simulated trip distances are closest (KS) to the
/// observed ones. Forms within the tie tolerance of the best are treated as
/// equal and the one with fewer parameters wins.
pub fn select_deterrence_form(ks: Vec<(DeterrenceForm, f64)>, tolerance: f64) -> FormSelection {
    let best = ks.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
    let chosen = ks
        .iter()
        .filter(|k| k.1 <= best + tolerance)
        .min_by(|a, b| a.0.n_params().cmp(&b.0.n_params()).then(a.1.total_cmp(&b.1)))
        .map(|k| k.0)
        .unwrap_or(DeterrenceForm::L);
    FormSelection { chosen, ks, tolerance }
}

/// KS statistic of each fit against `observed` distances.
pub fn ks_per_form<D: CellDistances + ?Sized>(
    fits: &[DeterrenceFit],
    observed: &[f64],
    origins: &[u32],
    cell_attraction: &[f64],
    distances: &D,
    samples: usize,
    seed: u64,
) -> Vec<(DeterrenceForm, f64)> {
    fits.iter()
        .map(|f| {
            let sim = simulate_trip_distances(origins, cell_attraction, distances, &f.params, samples, seed);
            (f.params.form, ks_statistic(&sim, observed))
        })
        .collect()
}
