mod common;

use common::{at, rng, toy_town, total_variation, within_sigma};
use mobgen_core::calibration::synthetic::synthetic_truth_bundle;
use mobgen_core::choice::{destination_probabilities, BeelineDistances, DeterrenceParams};
use mobgen_core::geo::{haversine_m, FocusIndex, Polygon};
use mobgen_core::grid::Grid;
use mobgen_core::simulate::Scenario;
use mobgen_core::stats::jensen_shannon;
use mobgen_core::{ActivityType, AreaGeometry, Building, DestinationModel, Landuse, LonLat};
use proptest::prelude::*;

const SHOP: ActivityType = ActivityType::Shopping;

fn beeline(points: &[LonLat]) -> BeelineDistances {
    BeelineDistances {
        centroids: points.to_vec(),
    }
}

fn focus_around(buildings: &[Building]) -> AreaGeometry {
    let lo = buildings.iter().map(|b| b.coordinates).fold(LonLat::new(f64::MAX, f64::MAX), |a, b| {
        LonLat::new(a.lon.min(b.lon), a.lat.min(b.lat))
    });
    let hi = buildings.iter().map(|b| b.coordinates).fold(LonLat::new(f64::MIN, f64::MIN), |a, b| {
        LonLat::new(a.lon.max(b.lon), a.lat.max(b.lat))
    });
    let (lo, hi) = (LonLat::new(lo.lon - 0.01, lo.lat - 0.01), LonLat::new(hi.lon + 0.01, hi.lat + 0.01));
    let ring = vec![lo, LonLat::new(hi.lon, lo.lat), hi, LonLat::new(lo.lon, hi.lat), lo];
    AreaGeometry::focus(vec![Polygon::new(ring, vec![])])
}

#[test]
fn reference_attraction_values() {
    let m = DestinationModel::reference();
    let mut b = Building::bare(1, at([0.0, 0.0]), 150.0);
    for p in ActivityType::ALL {
        assert_eq!(m.attraction(&b, p), 1.0);
    }
    b.n_shops = 1;
    assert!((m.attraction(&b, SHOP) - 349.44).abs() < 1e-9);
    let mut r = Building::bare(2, at([0.0, 0.0]), 200.0);
    r.landuse = Landuse::Residential;
    assert!((m.attraction(&r, ActivityType::Home) - 7.54).abs() < 1e-9);
}

#[test]
fn reference_deterrence_values() {
    let m = DestinationModel::reference();
    assert!(m.log_deterrence(1.0, SHOP).abs() < 1e-12);
    assert!((m.deterrence[SHOP].f(1.0) - 1.0).abs() < 1e-12);
    assert!((m.log_deterrence(1.0, ActivityType::Work) + 0.035).abs() < 1e-12);
    assert_eq!(m.deterrence[ActivityType::School].f(900.0), 0.0);
    assert_eq!(m.log_deterrence(900.0, ActivityType::School), f64::NEG_INFINITY);
    assert!(m.deterrence[ActivityType::School].f(800.0) > 0.0);
}

#[test]
fn one_cell_gets_all_mass() {
    let p = destination_probabilities(0, SHOP, &[12.0], &beeline(&[at([0.0, 0.0])]), &DestinationModel::reference().deterrence[SHOP], false)
        .unwrap();
    assert_eq!(p, vec![1.0]);
}

#[test]
fn two_cell_odds_follow_the_closed_form() {
    let pts = [at([0.0, 0.0]), at([1000.0, 0.0]), at([-2000.0, 0.0])];
    let d = beeline(&pts);
    let det = &DestinationModel::reference().deterrence[SHOP];
    let p = destination_probabilities(0, SHOP, &[0.0, 5.0, 5.0], &d, det, false).unwrap();
    let (d1, d2) = (haversine_m(pts[0], pts[1]) / 1000.0, haversine_m(pts[0], pts[2]) / 1000.0);
    let lf = |x: f64| -0.215 * x.ln().powi(2) - 1.414 * x.ln();
    let odds = (lf(d1) - lf(d2)).exp();
    assert!((p[1] / p[2] - odds).abs() < 1e-9 * odds);
    // at exactly 1 and 2 km the ratio is exp(0.215 ln²2 + 1.414 ln 2)
    let l2 = 2f64.ln();
    assert!(((lf(1.0) - lf(2.0)).exp() - (0.215 * l2 * l2 + 1.414 * l2).exp()).abs() < 1e-12);
}

#[test]
fn beyond_cutoff_is_a_degenerate_choice() {
    let pts = [at([0.0, 0.0]), at([900_000.0, 0.0])];
    let det = DeterrenceParams::flat().with_cutoff(800.0);
    let r = destination_probabilities(0, ActivityType::School, &[0.0, 3.0], &beeline(&pts), &det, false);
    assert!(r.is_err());
}

/// `k` hamlets of `per` buildings, each within 60 m of its center, spread
/// over a 6 km square.
fn hamlets(k: usize, per: usize, seed: u64) -> Vec<Building> {
    use rand::Rng;
    let mut r = rng(seed);
    let centers: Vec<[f64; 2]> = (0..k).map(|_| [r.random::<f64>() * 6000.0, r.random::<f64>() * 6000.0]).collect();
    let mut town = toy_town(k * per, 120.0, seed + 1);
    for (i, b) in town.iter_mut().enumerate() {
        let c = centers[i / per];
        let xy = common::proj().project(b.coordinates);
        b.coordinates = at([c[0] + xy[0], c[1] + xy[1]]);
    }
    town
}

#[test]
fn grid_matches_ungridded_evaluation_on_twenty_cells() {
    let model = DestinationModel::reference();
    let buildings = hamlets(20, 15, 3);
    let cells: Vec<(u32, Vec<u32>)> = (0..20).map(|h| (0, (h * 15..h * 15 + 15).map(|i| i as u32).collect())).collect();
    let grid = Grid::from_assignment(&buildings, cells, &model).unwrap();
    let cents = grid.centroids();
    let det = &model.deterrence[SHOP];
    for origin in 0..grid.len() {
        let p = destination_probabilities(origin, SHOP, grid.cell_attraction(SHOP), &beeline(&cents), det, false).unwrap();
        let mut brute = vec![0.0; grid.len()];
        for (i, b) in buildings.iter().enumerate() {
            let d = haversine_m(cents[origin], b.coordinates) / 1000.0;
            brute[grid.cell_of(i)] += model.attraction(b, SHOP) * det.f(d);
        }
        let s: f64 = brute.iter().sum();
        brute.iter_mut().for_each(|x| *x /= s);
        let js = jensen_shannon(&p, &brute);
        assert!(js < 0.05, "origin {origin}: JS {js}");
    }
}

fn scenario_parts(buildings: Vec<Building>, threshold: f64) -> (Vec<Building>, Grid) {
    let model = DestinationModel::reference();
    let grid = Grid::build(&buildings, &FocusIndex::new(&focus_around(&buildings)), threshold, &model).unwrap();
    (buildings, grid)
}

#[test]
fn single_building_grid_always_returns_it() {
    let bundle = synthetic_truth_bundle();
    let (buildings, grid) = scenario_parts(vec![Building::bare(9, at([0.0, 0.0]), 80.0)], 150.0);
    let s = Scenario::new(&buildings, &grid, beeline(&grid.centroids()), &bundle).unwrap();
    let mut r = rng(0);
    for p in ActivityType::ALL {
        assert_eq!(s.choose_destination(0, p, &mut r).unwrap(), 0);
    }
}

#[test]
fn within_cell_split_follows_attraction() {
    let bundle = synthetic_truth_bundle();
    let mut shop = Building::bare(1, at([0.0, 0.0]), 80.0);
    shop.n_shops = 1;
    let bare = Building::bare(2, at([10.0, 0.0]), 80.0);
    let (buildings, grid) = scenario_parts(vec![shop, bare], 150.0);
    assert_eq!(grid.len(), 1);
    let s = Scenario::new(&buildings, &grid, beeline(&grid.centroids()), &bundle).unwrap();
    let mut r = rng(1);
    let n = 100_000;
    let hits = (0..n).filter(|_| s.choose_destination(0, SHOP, &mut r).unwrap() == 0).count();
    assert!(within_sigma(hits, n, 349.44 / 350.44, 3.0), "{hits}");
}

/// Exact building-level MNL from `origin` and the exact two-stage distribution.
pub fn exact_and_two_stage(buildings: &[Building], grid: &Grid, origin: usize, model: &DestinationModel) -> (Vec<f64>, Vec<f64>) {
    let det = &model.deterrence[SHOP];
    let o = buildings[origin].coordinates;
    let mut exact: Vec<f64> = buildings
        .iter()
        .map(|b| model.attraction(b, SHOP) * det.f(haversine_m(o, b.coordinates) / 1000.0))
        .collect();
    let s: f64 = exact.iter().sum();
    exact.iter_mut().for_each(|x| *x /= s);
    let cents = grid.centroids();
    let oc = grid.cell_of(origin);
    let pc = destination_probabilities(oc, SHOP, grid.cell_attraction(SHOP), &beeline(&cents), det, false).unwrap();
    let two: Vec<f64> = (0..buildings.len())
        .map(|b| pc[grid.cell_of(b)] * grid.member_probability(b, SHOP))
        .collect();
    (exact, two)
}

#[test]
fn two_stage_draws_match_the_exact_two_stage_distribution() {
    let bundle = synthetic_truth_bundle();
    let (buildings, grid) = scenario_parts(toy_town(200, 3000.0, 11), 150.0);
    let s = Scenario::new(&buildings, &grid, beeline(&grid.centroids()), &bundle).unwrap();
    let origin = 17;
    let (_, two) = exact_and_two_stage(&buildings, &grid, origin, &bundle.destination);
    let n = 100_000;
    let mut r = rng(4);
    let mut counts = vec![0usize; buildings.len()];
    for _ in 0..n {
        counts[s.choose_destination(grid.cell_of(origin), SHOP, &mut r).unwrap()] += 1;
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    assert!(total_variation(&freq, &two) < 0.02);
}

#[test]
fn grid_error_vanishes_for_distant_origins() {
    let model = DestinationModel::reference();
    let mut last = f64::INFINITY;
    for km in [2.0, 5.0, 20.0] {
        let mut town = toy_town(200, 3000.0, 11);
        town.push(Building::bare(999, at([km * 1000.0 + 1500.0, 0.0]), 80.0));
        let (buildings, grid) = scenario_parts(town, 150.0);
        let (exact, two) = exact_and_two_stage(&buildings, &grid, 200, &model);
        let tv = total_variation(&two, &exact);
        assert!(tv < last, "{km} km: {tv}");
        last = tv;
    }
    assert!(last < 0.03);
}

#[test]
fn two_stage_draws_converge_to_cell_distribution() {
    let bundle = synthetic_truth_bundle();
    let (buildings, grid) = scenario_parts(toy_town(120, 2500.0, 5), 300.0);
    assert!(grid.len() <= 20, "{} cells", grid.len());
    let s = Scenario::new(&buildings, &grid, beeline(&grid.centroids()), &bundle).unwrap();
    let p = s.cell_probabilities(0, SHOP).unwrap();
    let n = 100_000;
    let mut r = rng(8);
    let mut counts = vec![0usize; grid.len()];
    for _ in 0..n {
        counts[grid.cell_of(s.choose_destination(0, SHOP, &mut r).unwrap())] += 1;
    }
    // Pearson chi-square against the 0.99 quantile for ≤19 degrees of freedom
    let chi2: f64 = counts
        .iter()
        .zip(&p)
        .filter(|(_, &q)| q > 0.0)
        .map(|(&c, &q)| (c as f64 - n as f64 * q).powi(2) / (n as f64 * q))
        .sum();
    assert!(chi2 < 36.19, "chi2 {chi2} over {} cells", grid.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn probabilities_normalize_and_ignore_attraction_scale(
        attr in prop::collection::vec(1.0f64..500.0, 1..50),
        xy in prop::collection::vec((-20_000.0f64..20_000.0, -20_000.0f64..20_000.0), 50),
        scale in 0.01f64..1000.0,
        origin_pick in 0usize..50,
    ) {
        let n = attr.len();
        let pts: Vec<LonLat> = xy[..n].iter().map(|&(x, y)| at([x, y])).collect();
        let origin = origin_pick % n;
        let model = DestinationModel::reference();
        for p in [ActivityType::Work, ActivityType::Shopping, ActivityType::Other] {
            let a = destination_probabilities(origin, p, &attr, &beeline(&pts), &model.deterrence[p], false).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let scaled: Vec<f64> = attr.iter().map(|x| x * scale).collect();
            let b = destination_probabilities(origin, p, &scaled, &beeline(&pts), &model.deterrence[p], false).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn farther_shopping_cell_loses_probability(d1 in 1.01f64..50.0, extra in 0.01f64..50.0, attr in prop::collection::vec(1.0f64..100.0, 3)) {
        let model = DestinationModel::reference();
        let det = &model.deterrence[SHOP];
        let near = [at([0.0, 0.0]), at([d1 * 1000.0, 0.0]), at([0.0, 3000.0])];
        let far = [near[0], at([(d1 + extra) * 1000.0, 0.0]), near[2]];
        let p = destination_probabilities(0, SHOP, &attr, &beeline(&near), det, false).unwrap();
        let q = destination_probabilities(0, SHOP, &attr, &beeline(&far), det, false).unwrap();
        prop_assert!(q[1] < p[1]);
    }

    #[test]
    fn attraction_is_at_least_one(area in 1.0f64..5000.0, shops in 0u32..5, offices in 0u32..5, lu in 0usize..4) {
        let model = DestinationModel::reference();
        let mut b = Building::bare(1, at([0.0, 0.0]), area);
        b.n_shops = shops;
        b.n_offices = offices;
        b.landuse = [Landuse::Residential, Landuse::Industrial, Landuse::Commercial, Landuse::None][lu];
        for p in ActivityType::ALL {
            prop_assert!(model.attraction(&b, p) >= 1.0);
        }
    }
}
