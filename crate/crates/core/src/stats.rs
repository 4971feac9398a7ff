//! Small statistics helpers shared by sampling, calibration and validation.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

/// Cumulative distribution over non-negative weights for repeated draws.
#[derive(Clone, Debug, PartialEq)]
pub struct Cumulative {
    cdf: Vec<f64>,
}

impl Cumulative {
    /// `None` when the weights sum to zero (or contain NaN).
    pub fn new(weights: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .into_iter()
            .map(|w| {
                acc += if w > 0.0 { w } else { 0.0 };
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return None;
        }
        Some(Cumulative { cdf })
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().unwrap_or(&0.0)
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    /// Index for a uniform variate `u ∈ [0, 1)`. Zero-weight entries are never
    /// returned.
    pub fn index_for(&self, u: f64) -> usize {
        let target = u * self.total();
        let i = self.cdf.partition_point(|&c| c <= target);
        i.min(self.cdf.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index_for(rng.random::<f64>())
    }

    pub fn probability(&self, i: usize) -> f64 {
        let lo = if i == 0 { 0.0 } else { self.cdf[i - 1] };
        (self.cdf[i] - lo) / self.total()
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F1 - F2|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { 1.0 };
    }
    let mut x: Vec<f64> = a.to_vec();
    let mut y: Vec<f64> = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Jensen–Shannon divergence (natural log) between two distributions on the
/// same support. Inputs are normalized first; the result lies in `[0, ln 2]`.
pub fn jensen_shannon(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    let sp: f64 = p.iter().sum();
    let sq: f64 = q.iter().sum();
    let mut js = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let (pi, qi) = (pi / sp, qi / sq);
        let m = 0.5 * (pi + qi);
        if pi > 0.0 {
            js += 0.5 * pi * (pi / m).ln();
        }
        if qi > 0.0 {
            js += 0.5 * qi * (qi / m).ln();
        }
    }
    js.clamp(0.0, core::f64::consts::LN_2)
}

/// Linear-interpolation quantile of sorted data (numpy's default rule).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}
