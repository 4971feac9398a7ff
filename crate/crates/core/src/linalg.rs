//! Dense row-major helpers for the small covariance matrices of dwell-time
//! mixtures (dimension = chain length − 1, rarely above a dozen).

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cholesky {
    dim: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// `None` if `a` is not (numerically) positive definite.
    pub fn new(a: &[f64], dim: usize) -> Option<Self> {
        assert_eq!(a.len(), dim * dim);
        let mut l = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = a[i * dim + j];
                for k in 0..j {
                    s -= l[i * dim + k] * l[j * dim + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * dim + i] = s.sqrt();
                } else {
                    l[i * dim + j] = s / l[j * dim + j];
                }
            }
        }
        Some(Cholesky { dim, l })
    }

    /// Factor of a positive semi-definite matrix: singular directions get a
    /// diagonal jitter of `eps` (then 10·eps, ...) until the factorization
    /// succeeds. `None` if the matrix is not symmetric PSD within tolerance.
    pub fn psd(a: &[f64], dim: usize, eps: f64) -> Option<Self> {
        for i in 0..dim {
            for j in 0..i {
                let (x, y) = (a[i * dim + j], a[j * dim + i]);
                if (x - y).abs() > 1e-9 * (1.0 + x.abs().max(y.abs())) {
                    return None;
                }
            }
        }
        if let Some(c) = Cholesky::new(a, dim) {
            return Some(c);
        }
        let mut jitter = eps;
        for _ in 0..8 {
            let mut b = a.to_vec();
            for i in 0..dim {
                b[i * dim + i] += jitter;
            }
            if let Some(c) = Cholesky::new(&b, dim) {
                return Some(c);
            }
            jitter *= 10.0;
        }
        None
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim).map(|i| self.l[i * self.dim + i].ln()).sum::<f64>() * 2.0
    }

    /// `L z`.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..=i).map(|k| self.l[i * self.dim + k] * z[k]).sum())
            .collect()
    }

    /// Squared Mahalanobis norm `xᵀ A⁻¹ x` via forward substitution.
    pub fn mahalanobis2(&self, x: &[f64]) -> f64 {
        let n = self.dim;
        let mut y = [0.0f64; 32];
        let mut heap;
        let y: &mut [f64] = if n <= 32 {
            &mut y[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i];
            acc += y[i] * y[i];
        }
        acc
    }
}
