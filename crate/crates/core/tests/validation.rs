mod common;

use common::{at, rng};
use mobgen_core::geo::EARTH_RADIUS_M;
use mobgen_core::routing::BeelineRouter;
use mobgen_core::stats::jensen_shannon;
use mobgen_core::validation::{
    agent_timeline, compare_shares, daily_distance, od_metrics, temporal_shares, zonal_attraction, Stop, Trip, MOVING,
    RESOLUTIONS_M,
};
use mobgen_core::{ActivityType, LonLat};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use ActivityType::{Home, Other, Shopping, Work};

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn js_oracle(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

// great-circle distance through the chord of unit vectors
fn chord_distance_m(a: LonLat, b: LonLat) -> f64 {
    let v = |p: LonLat| {
        let (la, lo) = (p.lat.to_radians(), p.lon.to_radians());
        [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
    };
    let (u, w) = (v(a), v(b));
    let c = ((u[0] - w[0]).powi(2) + (u[1] - w[1]).powi(2) + (u[2] - w[2]).powi(2)).sqrt();
    2.0 * EARTH_RADIUS_M * (c / 2.0).asin()
}

fn trip(purpose: ActivityType, o: [f64; 2], d: [f64; 2]) -> Trip {
    Trip {
        purpose,
        origin: at(o),
        destination: at(d),
    }
}

fn random_trips(n: usize, seed: u64) -> Vec<Trip> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let o = [r.random_range(0.0..8000.0), r.random_range(0.0..8000.0)];
            let d = [r.random_range(0.0..8000.0), r.random_range(0.0..8000.0)];
            trip(Other, o, d)
        })
        .collect()
}

fn stop(kind: ActivityType, stay: Option<f64>, xy: [f64; 2]) -> Stop {
    Stop {
        kind,
        stay_minutes: stay,
        location: at(xy),
    }
}

fn commute() -> Vec<Stop> {
    vec![
        stop(Home, Some(480.0), [0.0, 0.0]),
        stop(Work, Some(480.0), [5000.0, 0.0]),
        stop(Home, None, [0.0, 0.0]),
    ]
}

#[test]
fn identical_trip_sets_score_perfectly() {
    let t = random_trips(2000, 1);
    for &res in &RESOLUTIONS_M {
        for r in [zonal_attraction(&t, &t, res).unwrap(), od_metrics(&t, &t, res).unwrap()] {
            assert_eq!(r.r2, 1.0);
            assert_eq!(r.mae, 0.0);
            assert_eq!(r.jensen_shannon, 0.0);
            assert!(r.zones > 0);
        }
    }
}

#[test]
fn disjoint_destinations_reach_ln2() {
    let a: Vec<Trip> = (0..50).map(|_| trip(Work, [0.0, 0.0], [100.0, 100.0])).collect();
    let b: Vec<Trip> = (0..50).map(|_| trip(Work, [0.0, 0.0], [3100.0, 3100.0])).collect();
    let r = zonal_attraction(&a, &b, 1000.0).unwrap();
    assert!((r.jensen_shannon - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(r.zones, 2);
    assert!((r.mae - 100.0).abs() < 1e-12);
}

#[test]
fn four_zone_trip_example() {
    let dest = [[250.0, 250.0], [1250.0, 250.0], [250.0, 1250.0], [1250.0, 1250.0]];
    let mk = |counts: [usize; 4]| -> Vec<Trip> {
        counts
            .iter()
            .zip(dest)
            .flat_map(|(&n, d)| (0..n).map(move |_| trip(Shopping, [0.0, 0.0], d)))
            .collect()
    };
    let model = mk([4, 3, 2, 1]);
    let survey = mk([1, 2, 3, 4]);
    let r = zonal_attraction(&model, &survey, 1000.0).unwrap();
    let (p, q) = ([0.4, 0.3, 0.2, 0.1], [0.1, 0.2, 0.3, 0.4]);
    assert_eq!(r.zones, 4);
    assert!((r.r2 + 3.0).abs() < 1e-12, "{}", r.r2);
    assert!((r.mae - 20.0).abs() < 1e-9);
    assert!((r.jensen_shannon - js_oracle(&p, &q)).abs() < 1e-12);
    // every trip starts in zone (0, 0): OD equals the zonal comparison
    let od = od_metrics(&model, &survey, 1000.0).unwrap();
    assert!((od.r2 - r.r2).abs() < 1e-12 && (od.jensen_shannon - r.jensen_shannon).abs() < 1e-12);
}

#[test]
fn od_two_by_two_hand_example() {
    let (a, b) = ([250.0, 250.0], [1700.0, 250.0]);
    let mut model = Vec::new();
    let mut survey = Vec::new();
    // pairs aa, ab, ba, bb: model 1:1:1:1, survey 2:1:1:0
    for (o, d, nm, ns) in [(a, a, 1, 2), (a, b, 1, 1), (b, a, 1, 1), (b, b, 1, 0)] {
        model.extend((0..nm).map(|_| trip(Other, o, d)));
        survey.extend((0..ns).map(|_| trip(Other, o, d)));
    }
    let r = od_metrics(&model, &survey, 1000.0).unwrap();
    let (p, q) = ([0.25; 4], [0.5, 0.25, 0.25, 0.0]);
    // survey mean 0.25: SS_tot = 0.0625 * 2, SS_res = the same
    assert!(r.r2.abs() < 1e-12, "{}", r.r2);
    assert_eq!(r.zones, 4);
    assert!((r.mae - 12.5).abs() < 1e-9);
    assert!((r.jensen_shannon - js_oracle(&p, &q)).abs() < 1e-12);
}

#[test]
fn scrambled_flows_lose_all_explanatory_power() {
    let survey = random_trips(20_000, 2);
    let mut dests: Vec<LonLat> = survey.iter().map(|t| t.destination).collect();
    dests.shuffle(&mut rng(3));
    let model: Vec<Trip> = survey
        .iter()
        .zip(dests)
        .map(|(t, d)| Trip {
            destination: d,
            ..*t
        })
        .collect();
    // origins and destinations keep their marginals
    let z = zonal_attraction(&model, &survey, 1000.0).unwrap();
    assert_eq!(z.r2, 1.0);
    let od = od_metrics(&model, &survey, 1000.0).unwrap();
    assert!(od.r2 < 0.1, "{}", od.r2);
    assert!(od.jensen_shannon > 0.05);
}

#[test]
fn daily_distance_examples() {
    let router = BeelineRouter { speed_kmh: 30.0 };
    let home = vec![vec![stop(Home, None, [0.0, 0.0])]; 10];
    let s = daily_distance(&home, &router);
    assert_eq!((s.n, s.mean_km, s.median_km, s.ci95_km), (10, 0.0, 0.0, 0.0));

    let s = daily_distance(&[commute()], &router);
    let want = 2.0 * chord_distance_m(at([0.0, 0.0]), at([5000.0, 0.0])) / 1000.0;
    assert!((s.mean_km - want).abs() < 1e-6);
    assert!((s.mean_km - 10.0).abs() < 0.01);
}

#[test]
fn daily_distance_matches_direct_summation() {
    let mut r = rng(4);
    let router = BeelineRouter { speed_kmh: 25.0 };
    let days: Vec<Vec<Stop>> = (0..100)
        .map(|_| {
            let n = r.random_range(1..6);
            (0..n)
                .map(|i| {
                    let xy = [r.random_range(-9000.0..9000.0), r.random_range(-9000.0..9000.0)];
                    stop(if i == 0 { Home } else { Other }, if i + 1 == n { None } else { Some(60.0) }, xy)
                })
                .collect()
        })
        .collect();
    let mut km: Vec<f64> = days
        .iter()
        .map(|d| d.windows(2).map(|w| chord_distance_m(w[0].location, w[1].location)).sum::<f64>() / 1000.0)
        .collect();
    let s = daily_distance(&days, &router);
    let mean = km.iter().sum::<f64>() / 100.0;
    let sd = (km.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    km.sort_by(f64::total_cmp);
    assert_eq!(s.n, 100);
    assert!((s.mean_km - mean).abs() < 1e-6);
    // 100 points: the median sits halfway between ranks 50 and 51
    assert!((s.median_km - 0.5 * (km[49] + km[50])).abs() < 1e-6);
    assert!((s.q25_km - (km[24] + 0.75 * (km[25] - km[24]))).abs() < 1e-6);
    assert!((s.ci95_km - 1.96 * sd / 10.0).abs() < 1e-3 * s.ci95_km.max(1e-9), "{} {}", s.ci95_km, 1.96 * sd / 10.0);
}

#[test]
fn commute_timeline() {
    let router = BeelineRouter { speed_kmh: 30.0 };
    let tl = agent_timeline(&[commute()], &router);
    let states: Vec<usize> = tl.iter().map(|x| x.2).collect();
    assert_eq!(states, [0, MOVING, 1, MOVING, 0]);
    let travel = chord_distance_m(at([0.0, 0.0]), at([5000.0, 0.0])) / (30.0 / 3.6) / 60.0;
    let want = [(0.0, 480.0), (480.0, 480.0 + travel), (480.0 + travel, 960.0 + travel)];
    for (got, w) in tl.iter().zip(want) {
        assert!((got.0 - w.0).abs() < 1e-9 && (got.1 - w.1).abs() < 1e-9);
    }
    assert_eq!(tl.last().unwrap().1, 1440.0);

    let s = temporal_shares(&[vec![commute()], vec![vec![stop(Home, None, [0.0, 0.0])]]], &router, 5.0).unwrap();
    assert_eq!(s.len(), 288);
    assert_eq!(s[0][0], 1.0);
    assert_eq!(s[97], [0.5, 0.0, 0.0, 0.0, 0.0, 0.5]); // 485 min
    assert_eq!(s[120], [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]); // 600 min
    assert_eq!(s[287][0], 1.0);
}

#[test]
fn identical_populations_have_identical_profiles() {
    let router = BeelineRouter { speed_kmh: 30.0 };
    let agents: Vec<Vec<Vec<Stop>>> = (0..20).map(|_| vec![commute(), commute()]).collect();
    let a = temporal_shares(&agents, &router, 15.0).unwrap();
    let b = temporal_shares(&agents.clone(), &router, 15.0).unwrap();
    assert_eq!(a.len(), 192);
    let diff: f64 = a.iter().zip(&b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).sum();
    assert_eq!(diff, 0.0);
    assert!(temporal_shares(&agents, &router, 0.0).is_err());
}

#[test]
fn empty_trip_sets_are_rejected() {
    let t = random_trips(5, 5);
    assert!(zonal_attraction(&[], &t, 500.0).is_err());
    assert!(od_metrics(&t, &[], 500.0).is_err());
    assert!(zonal_attraction(&t, &t, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn js_is_symmetric_bounded_and_matches_oracle(
        v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30)
    ) {
        let (mut p, mut q): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        p[0] += 0.01;
        q[0] += 0.01;
        let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
        let a = jensen_shannon(&p, &q);
        prop_assert!((a - jensen_shannon(&q, &p)).abs() < 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2).contains(&a));
        let pn: Vec<f64> = p.iter().map(|x| x / sp).collect();
        let qn: Vec<f64> = q.iter().map(|x| x / sq).collect();
        prop_assert!((a - js_oracle(&pn, &qn)).abs() < 1e-12);
        let r = compare_shares(&pn, &pn);
        prop_assert_eq!(r.mae, 0.0);
    }

    #[test]
    fn temporal_shares_sum_to_one(stays in prop::collection::vec((0.0f64..900.0, -3000.0f64..3000.0), 1..6), step in 1.0f64..60.0) {
        let n = stays.len();
        let day: Vec<Stop> = stays
            .iter()
            .enumerate()
            .map(|(i, &(m, x))| stop(if i == 0 { Home } else { Other }, (i + 1 < n).then_some(m), [x, 0.0]))
            .collect();
        let s = temporal_shares(&[vec![day.clone(), day], vec![]], &BeelineRouter { speed_kmh: 20.0 }, step).unwrap();
        for v in s {
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
