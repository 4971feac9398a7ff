//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! Projected L-BFGS: the two-loop recursion runs on the free variables only,
//! variables pinned at a bound with an outward gradient are held fixed, and a
//! projected backtracking line search enforces the Armijo condition on the
//! projected step.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease of f falls below this.
    pub function_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-7,
            function_tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64], pg: &mut [f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        pg[i] = if (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0) {
            0.0
        } else {
            g[i]
        };
        norm = norm.max(pg[i].abs());
    }
    norm
}

fn dot_masked(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(free)
        .filter(|(_, f)| **f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Minimizes `f` subject to `lower ≤ x ≤ upper`. `f` writes the gradient into
/// its second argument and returns the value. Bounds may be infinite.
///
/// Returns an error if the function is not finite at the start or if the
/// iteration budget runs out before either tolerance is met.
pub fn minimize_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n);
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Err(Error::FitFailed("objective is not finite at the starting point".into()));
    }
    let mut pg = vec![0.0; n];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut d = vec![0.0; n];
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut free = vec![true; n];

    for it in 0..opts.max_iterations {
        let pg_norm = projected_gradient(&x, &g, lower, upper, &mut pg);
        if pg_norm < opts.gradient_tolerance {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: it,
                projected_gradient_norm: pg_norm,
            });
        }
        for i in 0..n {
            free[i] = pg[i] != 0.0 || (x[i] > lower[i] && x[i] < upper[i]);
        }

        // two-loop recursion on the free subspace
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot_masked(s, &q, &free);
            for i in 0..n {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        let gamma = match mem.back() {
            Some((s, y, _)) => {
                let yy = dot_masked(y, y, &free);
                if yy > 0.0 {
                    (dot_masked(s, y, &free) / yy).max(1e-12)
                } else {
                    1.0
                }
            }
            None => 1.0 / pg_norm.max(1.0),
        };
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot_masked(y, &q, &free);
            for i in 0..n {
                if free[i] {
                    q[i] += (a - b) * s[i];
                }
            }
        }
        for i in 0..n {
            d[i] = if free[i] { -q[i] } else { 0.0 };
        }
        if dot_masked(&d, &g, &free) >= 0.0 {
            mem.clear();
            let scale = 1.0 / pg_norm.max(1.0);
            for i in 0..n {
                d[i] = -pg[i] * scale;
            }
        }

        // projected backtracking
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + step * d[i];
            }
            project(&mut xn, lower, upper);
            let decrease: f64 = (0..n).map(|i| g[i] * (xn[i] - x[i])).sum();
            let fnew = f(&xn, &mut gn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * decrease {
                accepted = true;
                let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
                let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
                if sy > 1e-12 * s.iter().map(|v| v * v).sum::<f64>().sqrt() * y.iter().map(|v| v * v).sum::<f64>().sqrt() {
                    if mem.len() == opts.memory {
                        mem.pop_front();
                    }
                    mem.push_back((s, y, 1.0 / sy));
                }
                let rel = (fx - fnew).abs() / fx.abs().max(fnew.abs()).max(1.0);
                core::mem::swap(&mut x, &mut xn);
                core::mem::swap(&mut g, &mut gn);
                fx = fnew;
                if rel < opts.function_tolerance {
                    let pgn = projected_gradient(&x, &g, lower, upper, &mut pg);
                    return Ok(Minimum {
                        x,
                        value: fx,
                        iterations: it + 1,
                        projected_gradient_norm: pgn,
                    });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            if mem.is_empty() {
                // no descent possible along the projected gradient at machine precision
                return Ok(Minimum {
                    x,
                    value: fx,
                    iterations: it,
                    projected_gradient_norm: pg_norm,
                });
            }
            mem.clear();
        }
    }
    let pgn = projected_gradient(&x, &g, lower, upper, &mut pg);
    Err(Error::FitFailed(format!(
        "no convergence after {} iterations (f = {fx}, projected gradient {pgn:e})",
        opts.max_iterations
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let inf = f64::INFINITY;
        let m = minimize_box(f, &[-1.2, 1.0], &[-inf, -inf], &[inf, inf], &LbfgsOptions::default()).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn active_lower_bound() {
        // min (x+1)² + (y-2)² with x ≥ 0: solution (0, 2)
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] + 1.0);
            g[1] = 2.0 * (x[1] - 2.0);
            (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2)
        };
        let m = minimize_box(f, &[3.0, -4.0], &[0.0, 0.0], &[f64::INFINITY; 2], &LbfgsOptions::default()).unwrap();
        assert_eq!(m.x[0], 0.0);
        assert!((m.x[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn ill_scaled_quadratic() {
        let w = [1.0, 1e4, 1e-2];
        let f = |x: &[f64], g: &mut [f64]| {
            let mut v = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * w[i] * (x[i] - 1.0);
                v += w[i] * (x[i] - 1.0).powi(2);
            }
            v
        };
        let inf = f64::INFINITY;
        let m = minimize_box(f, &[0.0; 3], &[-inf; 3], &[inf; 3], &LbfgsOptions::default()).unwrap();
        for xi in m.x {
            assert!((xi - 1.0).abs() < 1e-4);
        }
    }
}
