//! Full-covariance Gaussian mixtures: EM fitting, BIC-driven component
//! selection and sampling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::stats::Cumulative;

/// Diagonal regularization added when a covariance collapses.
pub const COVARIANCE_REGULARIZATION: f64 = 1e-6;
pub const MAX_EM_ITERATIONS: usize = 200;
/// Convergence threshold on the mean log-likelihood per sample.
pub const EM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `dim × dim`.
    pub covariance: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct MixtureRecord {
    dim: usize,
    components: Vec<ComponentRecord>,
}

#[derive(Clone, Debug, PartialEq)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    cov: Vec<f64>,
    chol: Cholesky,
}

/// Gaussian mixture; a zero-dimensional mixture is valid and samples empty
/// vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRecord", into = "MixtureRecord")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
    picker: Option<Cumulative>,
}

impl TryFrom<MixtureRecord> for GaussianMixture {
    type Error = Error;

    fn try_from(r: MixtureRecord) -> Result<Self> {
        GaussianMixture::new(r.dim, r.components)
    }
}

impl From<GaussianMixture> for MixtureRecord {
    fn from(g: GaussianMixture) -> Self {
        MixtureRecord {
            dim: g.dim,
            components: g.components(),
        }
    }
}

impl GaussianMixture {
    pub fn new(dim: usize, components: Vec<ComponentRecord>) -> Result<Self> {
        if dim == 0 {
            return Ok(GaussianMixture::empty());
        }
        if components.is_empty() {
            return Err(Error::ModelLoad("mixture without components".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) || components.iter().any(|c| !(c.weight >= 0.0)) {
            return Err(Error::ModelLoad("mixture weights must be non-negative and sum to a positive value".into()));
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::ModelLoad(format!("mixture weights sum to {total}, expected 1")));
        }
        let mut out = Vec::with_capacity(components.len());
        for c in components {
            if c.mean.len() != dim || c.covariance.len() != dim * dim {
                return Err(Error::ModelLoad(format!(
                    "component shape does not match dimension {dim}"
                )));
            }
            let chol = Cholesky::psd(&c.covariance, dim, 1e-9).ok_or_else(|| {
                Error::ModelLoad("covariance is not symmetric positive semi-definite".into())
            })?;
            out.push(Component {
                weight: c.weight / total,
                mean: c.mean,
                cov: c.covariance,
                chol,
            });
        }
        let picker = Cumulative::new(out.iter().map(|c| c.weight));
        Ok(GaussianMixture {
            dim,
            components: out,
            picker,
        })
    }

    pub fn empty() -> Self {
        GaussianMixture {
            dim: 0,
            components: Vec::new(),
            picker: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> Vec<ComponentRecord> {
        self.components
            .iter()
            .map(|c| ComponentRecord {
                weight: c.weight,
                mean: c.mean.clone(),
                covariance: c.cov.clone(),
            })
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let Some(picker) = &self.picker else {
            return Vec::new();
        };
        let c = &self.components[picker.sample(rng)];
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let lz = c.chol.mul_lower(&z);
        c.mean.iter().zip(lz).map(|(m, v)| m + v).collect()
    }

    /// Analytic mean of the mixture.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            for (mi, ci) in m.iter_mut().zip(&c.mean) {
                *mi += c.weight * ci;
            }
        }
        m
    }

    /// Analytic covariance: `Σ w_k (Σ_k + μ_k μ_kᵀ) − μ μᵀ`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let mu = self.mean();
        let mut s = vec![0.0; d * d];
        for c in &self.components {
            for i in 0..d {
                for j in 0..d {
                    s[i * d + j] += c.weight * (c.cov[i * d + j] + c.mean[i] * c.mean[j]);
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] -= mu[i] * mu[j];
            }
        }
        s
    }

    fn component_log_pdf(&self, k: usize, x: &[f64], diff: &mut [f64]) -> f64 {
        let c = &self.components[k];
        for i in 0..self.dim {
            diff[i] = x[i] - c.mean[i];
        }
        -0.5 * (self.dim as f64 * (2.0 * PI).ln() + c.chol.log_det() + c.chol.mahalanobis2(diff))
    }

    /// Total log-likelihood of `data` (rows of length `dim`).
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        let mut diff = vec![0.0; self.dim];
        let mut lp = vec![0.0; self.components.len()];
        data.iter()
            .map(|x| {
                for k in 0..self.components.len() {
                    lp[k] = self.components[k].weight.ln() + self.component_log_pdf(k, x, &mut diff);
                }
                log_sum_exp(&lp)
            })
            .sum()
    }

    pub fn n_parameters(&self) -> usize {
        n_parameters(self.components.len(), self.dim)
    }

    /// Bayesian information criterion, `−2 ln L + p ln n`.
    pub fn bic(&self, data: &[Vec<f64>]) -> f64 {
        -2.0 * self.log_likelihood(data) + self.n_parameters() as f64 * (data.len() as f64).ln()
    }
}

fn n_parameters(k: usize, d: usize) -> usize {
    (k - 1) + k * d + k * d * (d + 1) / 2
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: returns `k` initial means.
fn kmeans_pp<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let next = match Cumulative::new(d2.iter().copied()) {
            Some(c) => c.sample(rng),
            None => rng.random_range(0..data.len()),
        };
        centers.push(data[next].clone());
        let c = centers.last().unwrap();
        for (di, x) in d2.iter_mut().zip(data) {
            *di = di.min(sq_dist(x, c));
        }
    }
    centers
}

/// Fits a `k`-component full-covariance mixture with EM. Covariances that
/// lose positive definiteness get [`COVARIANCE_REGULARIZATION`] on the
/// diagonal; if that is not enough the fit fails.
pub fn fit_em<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Result<GaussianMixture> {
    let n = data.len();
    if n == 0 || k == 0 {
        return Err(Error::FitFailed("EM needs data and at least one component".into()));
    }
    let d = data[0].len();
    if d == 0 {
        return Ok(GaussianMixture::empty());
    }
    if data.iter().any(|x| x.len() != d) {
        return Err(Error::FitFailed("ragged data".into()));
    }
    let k = k.min(n);

    // initial responsibilities: hard assignment to the nearest k-means++ seed
    let seeds = kmeans_pp(data, k, rng);
    let mut resp = vec![0.0; n * k];
    for (i, x) in data.iter().enumerate() {
        let best = (0..k)
            .min_by(|&a, &b| sq_dist(x, &seeds[a]).total_cmp(&sq_dist(x, &seeds[b])))
            .unwrap();
        resp[i * k + best] = 1.0;
    }

    let mut model = m_step(data, &resp, k, d)?;
    let mut prev = f64::NEG_INFINITY;
    let mut diff = vec![0.0; d];
    let mut lp = vec![0.0; k];
    for _ in 0..MAX_EM_ITERATIONS {
        // E step
        let mut ll = 0.0;
        for (i, x) in data.iter().enumerate() {
            for j in 0..k {
                lp[j] = model.components[j].weight.ln() + model.component_log_pdf(j, x, &mut diff);
            }
            let lse = log_sum_exp(&lp);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (lp[j] - lse).exp();
            }
        }
        let mean_ll = ll / n as f64;
        model = m_step(data, &resp, k, d)?;
        if (mean_ll - prev).abs() < EM_TOLERANCE {
            break;
        }
        prev = mean_ll;
    }
    Ok(model)
}

fn m_step(data: &[Vec<f64>], resp: &[f64], k: usize, d: usize) -> Result<GaussianMixture> {
    let n = data.len();
    let mut comps = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum::<f64>() + 10.0 * f64::EPSILON;
        let mut mean = vec![0.0; d];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * k + j];
            for t in 0..d {
                mean[t] += r * x[t];
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = vec![0.0; d * d];
        for (i, x) in data.iter().enumerate() {
            let r = resp[i * k + j];
            if r == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = x[a] - mean[a];
                for b in 0..=a {
                    cov[a * d + b] += r * da * (x[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov[a * d + b] / nk;
                cov[a * d + b] = v;
                cov[b * d + a] = v;
            }
        }
        let chol = match Cholesky::new(&cov, d) {
            Some(c) => c,
            None => {
                for a in 0..d {
                    cov[a * d + a] += COVARIANCE_REGULARIZATION;
                }
                Cholesky::new(&cov, d).ok_or_else(|| {
                    Error::FitFailed("covariance degenerate after regularization".into())
                })?
            }
        };
        comps.push(Component {
            weight: nk / n as f64,
            mean,
            cov,
            chol,
        });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps.iter_mut().for_each(|c| c.weight /= total);
    let picker = Cumulative::new(comps.iter().map(|c| c.weight));
    Ok(GaussianMixture {
        dim: d,
        components: comps,
        picker,
    })
}

/// Result of growing the component count until BIC stops decreasing.
#[derive(Clone, Debug)]
pub struct BicSelection {
    pub mixture: GaussianMixture,
    /// BIC for `k = 1, 2, ...` as far as evaluated.
    pub bic: Vec<f64>,
}

/// Fits `k = 1, 2, ...` and returns the first `k` with `BIC(k+1) ≥ BIC(k)`
/// (or `max_k`). A component count whose parameters would exceed the sample
/// count is not tried.
pub fn select_by_bic<R: Rng + ?Sized>(data: &[Vec<f64>], max_k: usize, rng: &mut R) -> Result<BicSelection> {
    let mut best = fit_em(data, 1, rng)?;
    let mut bics = vec![best.bic(data)];
    let d = best.dim();
    if d == 0 {
        return Ok(BicSelection { mixture: best, bic: bics });
    }
    for k in 2..=max_k.max(1) {
        if n_parameters(k, d) >= data.len() {
            break;
        }
        let cand = fit_em(data, k, rng)?;
        let b = cand.bic(data);
        bics.push(b);
        if b >= bics[bics.len() - 2] {
            break;
        }
        best = cand;
    }
    Ok(BicSelection { mixture: best, bic: bics })
}
