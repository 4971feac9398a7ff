//! Attraction coefficients from destination frequencies alone: a trip with
//! unknown origin ends in cell `c` with probability `A_c / Σ_j A_j`, where
//! `A_c = n_c + Σ_k θ_k X_ck` for a cell of `n_c` buildings with summed
//! features `X_c`. Coefficients are bounded below by zero.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::CellTable;
use crate::building::N_FEATURES;
use crate::choice::AttractionCoeffs;
use crate::error::{Error, Result};
use crate::optimize::{minimize_box, LbfgsOptions};

/// Default forward-selection threshold on the mean log-likelihood gain.
pub const SELECTION_EPSILON: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AttractionFit {
    pub theta: AttractionCoeffs,
    /// Mean log-likelihood per trip.
    pub mean_log_likelihood: f64,
    pub active: Vec<usize>,
}

/// Per-trip mean of `Σ_c n_c ln A_c − N ln Σ_c A_c`.
pub fn mean_log_likelihood(trips_per_cell: &[f64], cells: &CellTable, theta: &AttractionCoeffs) -> f64 {
    let n: f64 = trips_per_cell.iter().sum();
    let mut total_a = 0.0;
    let mut ll = 0.0;
    for (c, &k) in cells.cells.iter().zip(trips_per_cell) {
        let a = c.attraction(theta);
        total_a += a;
        if k > 0.0 {
            ll += k * a.ln();
        }
    }
    (ll - n * total_a.ln()) / n
}

/// Maximizes the likelihood over the features in `active` (others fixed at
/// zero). Features are rescaled by their mean per building so all
/// coefficients share a scale during optimization.
pub fn fit_attraction(trips_per_cell: &[f64], cells: &CellTable, active: &[usize]) -> Result<AttractionFit> {
    if trips_per_cell.len() != cells.cells.len() {
        return Err(Error::arg("trip counts do not match the cell table"));
    }
    let n: f64 = trips_per_cell.iter().sum();
    if !(n > 0.0) {
        return Err(Error::FitFailed("no trips to fit attraction on".into()));
    }
    let buildings: f64 = cells.cells.iter().map(|c| c.count).sum();
    let active: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&k| cells.cells.iter().any(|c| c.features[k] > 0.0))
        .collect();
    let scale: Vec<f64> = active
        .iter()
        .map(|&k| cells.cells.iter().map(|c| c.features[k]).sum::<f64>() / buildings)
        .collect();
    let m = active.len();
    let theta_of = |x: &[f64]| {
        let mut t = [0.0; N_FEATURES];
        for (j, &k) in active.iter().enumerate() {
            t[k] = x[j] / scale[j];
        }
        t
    };
    if m == 0 {
        let theta = [0.0; N_FEATURES];
        return Ok(AttractionFit {
            theta,
            mean_log_likelihood: mean_log_likelihood(trips_per_cell, cells, &theta),
            active,
        });
    }
    // scaled feature matrix, only active columns
    let z: Vec<f64> = cells
        .cells
        .iter()
        .flat_map(|c| active.iter().zip(&scale).map(move |(&k, s)| c.features[k] / s))
        .collect();
    let counts: Vec<f64> = cells.cells.iter().map(|c| c.count).collect();
    let mut zsum = vec![0.0; m];
    for row in z.chunks(m) {
        for j in 0..m {
            zsum[j] += row[j];
        }
    }
    let objective = |x: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut total_a = 0.0;
        let mut ll = 0.0;
        for (c, row) in z.chunks(m).enumerate() {
            let a = counts[c] + row.iter().zip(x).map(|(zi, xi)| zi * xi).sum::<f64>();
            total_a += a;
            let k = trips_per_cell[c];
            if k > 0.0 {
                ll += k * a.ln();
                for j in 0..m {
                    g[j] -= k * row[j] / a;
                }
            }
        }
        for j in 0..m {
            g[j] = (g[j] + n * zsum[j] / total_a) / n;
        }
        -(ll - n * total_a.ln()) / n
    };
    let opts = LbfgsOptions {
        max_iterations: 1000,
        gradient_tolerance: 1e-9,
        function_tolerance: 1e-14,
        ..LbfgsOptions::default()
    };
    let res = minimize_box(objective, &vec![0.0; m], &vec![0.0; m], &vec![f64::INFINITY; m], &opts)?;
    Ok(AttractionFit {
        theta: theta_of(&res.x),
        mean_log_likelihood: -res.value,
        active,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSelection {
    /// Candidate features ordered by how much dropping them costs.
    pub ranking: Vec<(usize, f64)>,
    pub fit: AttractionFit,
}

/// Leave-one-out ranking followed by forward selection: features are added
/// in rank order while each addition raises the mean log-likelihood by more
/// than `epsilon`.
pub fn rank_and_select_features(trips_per_cell: &[f64], cells: &CellTable, epsilon: f64) -> Result<FeatureSelection> {
    let candidates: Vec<usize> = (0..N_FEATURES)
        .filter(|&k| cells.cells.iter().any(|c| c.features[k] > 0.0))
        .collect();
    let full = fit_attraction(trips_per_cell, cells, &candidates)?;
    let mut ranking = Vec::with_capacity(candidates.len());
    for &k in &candidates {
        let rest: Vec<usize> = candidates.iter().copied().filter(|&j| j != k).collect();
        let fit = fit_attraction(trips_per_cell, cells, &rest)?;
        ranking.push((k, full.mean_log_likelihood - fit.mean_log_likelihood));
    }
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut current = fit_attraction(trips_per_cell, cells, &[])?;
    let mut set = Vec::new();
    for &(k, _) in &ranking {
        let mut trial = set.clone();
        trial.push(k);
        let fit = fit_attraction(trips_per_cell, cells, &trial)?;
        if fit.mean_log_likelihood - current.mean_log_likelihood > epsilon {
            set = trial;
            current = fit;
        } else {
            break;
        }
    }
    Ok(FeatureSelection { ranking, fit: current })
}
