#![allow(dead_code)]

use mobgen_core::geo::LocalProjection;
use mobgen_core::{Building, Landuse, LonLat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CENTER: LonLat = LonLat::new(10.0, 51.0);

pub fn proj() -> LocalProjection {
    LocalProjection::new(CENTER)
}

/// Point `xy` meters east/north of [`CENTER`].
pub fn at(xy: [f64; 2]) -> LonLat {
    proj().unproject(xy)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Buildings scattered over a `side_m` square with mixed land use and POIs.
pub fn toy_town(n: usize, side_m: f64, seed: u64) -> Vec<Building> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let xy = [r.random::<f64>() * side_m - side_m / 2.0, r.random::<f64>() * side_m - side_m / 2.0];
            let mut b = Building::bare(i as u64 + 1, at(xy), 60.0 + r.random::<f64>() * 400.0);
            b.landuse = [Landuse::Residential, Landuse::Industrial, Landuse::Commercial, Landuse::None][r.random_range(0..4)];
            b.n_shops = u32::from(r.random::<f64>() < 0.15);
            b.n_offices = u32::from(r.random::<f64>() < 0.1);
            b.n_schools = u32::from(r.random::<f64>() < 0.02);
            b
        })
        .collect()
}

/// Upper bound of a `k·σ` band around the expected binomial count.
pub fn within_sigma(count: usize, n: usize, p: f64, k: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= k * sd.max(1e-12)
}

/// Total variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
}
