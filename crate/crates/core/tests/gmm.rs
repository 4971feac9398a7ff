mod common;

use common::rng;
use mobgen_core::gmm::{fit_em, select_by_bic, ComponentRecord, GaussianMixture};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn comp(weight: f64, mean: [f64; 2], cov: [f64; 4]) -> ComponentRecord {
    ComponentRecord {
        weight,
        mean: mean.to_vec(),
        covariance: cov.to_vec(),
    }
}

// x = mean + L z with L the hand-written Cholesky factor of a 2×2 covariance
fn draw_gaussian<R: Rng>(r: &mut R, mean: [f64; 2], cov: [f64; 4]) -> Vec<f64> {
    let l11 = cov[0].sqrt();
    let l21 = cov[2] / l11;
    let l22 = (cov[3] - l21 * l21).sqrt();
    let (z1, z2): (f64, f64) = (StandardNormal.sample(r), StandardNormal.sample(r));
    vec![mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2]
}

fn density_2d(x: &[f64], mean: &[f64], cov: &[f64]) -> f64 {
    let det = cov[0] * cov[3] - cov[1] * cov[2];
    let (a, b) = (x[0] - mean[0], x[1] - mean[1]);
    let q = (cov[3] * a * a - (cov[1] + cov[2]) * a * b + cov[0] * b * b) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

#[test]
fn bic_matches_hand_computation() {
    let comps = [comp(0.3, [8.0, 1.0], [1.0, 0.3, 0.3, 0.5]), comp(0.7, [11.0, 2.0], [0.5, 0.0, 0.0, 0.25])];
    let m = GaussianMixture::new(2, comps.to_vec()).unwrap();
    let mut r = rng(0);
    let data: Vec<Vec<f64>> = (0..300).map(|_| m.sample(&mut r)).collect();
    let ll: f64 = data
        .iter()
        .map(|x| comps.iter().map(|c| c.weight * density_2d(x, &c.mean, &c.covariance)).sum::<f64>().ln())
        .sum();
    // 1 free weight, 2 × 2 means, 2 × 3 covariance entries
    let want = -2.0 * ll + 11.0 * 300f64.ln();
    assert!((m.bic(&data) - want).abs() < 1e-8 * want.abs());
    assert_eq!(m.n_parameters(), 11);
}

#[test]
fn unimodal_data_selects_one_component() {
    let mut hits = 0;
    for rep in 0..20 {
        let mut r = rng(100 + rep);
        let data: Vec<Vec<f64>> = (0..400).map(|_| draw_gaussian(&mut r, [9.0, 3.0], [1.5, 0.6, 0.6, 0.8])).collect();
        let s = select_by_bic(&data, 5, &mut r).unwrap();
        if s.mixture.n_components() == 1 {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn bimodal_data_selects_two_components() {
    let mut hits = 0;
    for rep in 0..20 {
        let mut r = rng(200 + rep);
        let data: Vec<Vec<f64>> = (0..600)
            .map(|_| {
                if r.random::<f64>() < 0.4 {
                    draw_gaussian(&mut r, [4.0, 8.0], [0.6, 0.1, 0.1, 0.5])
                } else {
                    draw_gaussian(&mut r, [9.0, 2.0], [0.8, -0.2, -0.2, 0.6])
                }
            })
            .collect();
        let s = select_by_bic(&data, 5, &mut r).unwrap();
        if s.mixture.n_components() == 2 {
            hits += 1;
        }
    }
    assert!(hits >= 16, "{hits}/20");
}

#[test]
fn em_recovers_separated_components() {
    let mut r = rng(7);
    let data: Vec<Vec<f64>> = (0..4000)
        .map(|_| {
            if r.random::<f64>() < 0.25 {
                draw_gaussian(&mut r, [2.0, 6.0], [0.5, 0.0, 0.0, 0.5])
            } else {
                draw_gaussian(&mut r, [8.0, 1.0], [1.0, 0.4, 0.4, 0.7])
            }
        })
        .collect();
    let m = fit_em(&data, 2, &mut r).unwrap();
    let mut comps = m.components();
    comps.sort_by(|a, b| a.mean[0].total_cmp(&b.mean[0]));
    assert!((comps[0].weight - 0.25).abs() < 0.03);
    for (c, mean, cov) in [(&comps[0], [2.0, 6.0], [0.5, 0.0, 0.0, 0.5]), (&comps[1], [8.0, 1.0], [1.0, 0.4, 0.4, 0.7])] {
        for j in 0..2 {
            assert!((c.mean[j] - mean[j]).abs() < 0.1, "{:?}", c.mean);
        }
        for j in 0..4 {
            assert!((c.covariance[j] - cov[j]).abs() < 0.12, "{:?}", c.covariance);
        }
    }
}

#[test]
fn single_component_fit_is_the_sample_moments() {
    let mut r = rng(8);
    let data: Vec<Vec<f64>> = (0..500).map(|_| draw_gaussian(&mut r, [1.0, -2.0], [2.0, 0.5, 0.5, 1.0])).collect();
    let m = fit_em(&data, 1, &mut r).unwrap();
    let n = data.len() as f64;
    let mu: Vec<f64> = (0..2).map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let cov = |a: usize, b: usize| data.iter().map(|x| (x[a] - mu[a]) * (x[b] - mu[b])).sum::<f64>() / n;
    let c = &m.components()[0];
    for j in 0..2 {
        assert!((c.mean[j] - mu[j]).abs() < 1e-9);
    }
    for (j, (a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        assert!((c.covariance[j] - cov(a, b)).abs() < 1e-5);
    }
}

#[test]
fn invalid_mixtures_are_rejected() {
    assert!(GaussianMixture::new(2, vec![comp(1.0, [0.0, 0.0], [1.0, 2.0, 2.0, 1.0])]).is_err());
    assert!(GaussianMixture::new(2, vec![comp(0.5, [0.0, 0.0], [1.0, 0.0, 0.0, 1.0])]).is_err());
    assert!(fit_em(&[], 1, &mut rng(0)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_moments_are_weighted_component_moments(
        w in 0.05f64..0.95,
        m in prop::array::uniform4(-10.0f64..10.0),
        v in prop::array::uniform4(0.1f64..3.0),
        rho in -0.9f64..0.9,
    ) {
        let c1 = comp(w, [m[0], m[1]], [v[0], rho * (v[0] * v[1]).sqrt(), rho * (v[0] * v[1]).sqrt(), v[1]]);
        let c2 = comp(1.0 - w, [m[2], m[3]], [v[2], 0.0, 0.0, v[3]]);
        let g = GaussianMixture::new(2, vec![c1.clone(), c2.clone()]).unwrap();
        let mu = [w * m[0] + (1.0 - w) * m[2], w * m[1] + (1.0 - w) * m[3]];
        for j in 0..2 {
            prop_assert!((g.mean()[j] - mu[j]).abs() < 1e-9);
        }
        for a in 0..2 {
            for b in 0..2 {
                let want = [&c1, &c2].iter().map(|c| c.weight * (c.covariance[a * 2 + b] + (c.mean[a] - mu[a]) * (c.mean[b] - mu[b]))).sum::<f64>();
                prop_assert!((g.covariance()[a * 2 + b] - want).abs() < 1e-9);
            }
        }
    }
}
