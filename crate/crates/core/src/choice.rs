//! Gravity-model destination choice framed as a multinomial logit:
//! `P(j) ∝ A_j · f(d_{x,j})`, i.e. utility `V = ln A + ln f`.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::activity::{ActivityType, PerPurpose};
use crate::building::{Building, N_FEATURES};
use crate::error::{Error, Result};
use crate::geo::{haversine_m, LonLat};

/// Distances below this are clamped before evaluating logarithmic forms.
pub const MIN_DISTANCE_KM: f64 = 0.05;

/// Coefficients `θ0..θ11` of the attraction function for one purpose.
pub type AttractionCoeffs = [f64; N_FEATURES];

/// `A = 1 + Σ θ_k x_k`; at least 1 whenever all θ are non-negative.
pub fn attraction(building: &Building, coeffs: &AttractionCoeffs) -> f64 {
    1.0 + dot(&building.features(), coeffs)
}

/// Aggregated attraction of a group of `count` buildings whose features sum
/// to `features` (the function is linear, so this equals the member sum).
pub fn aggregated_attraction(count: f64, features: &[f64; N_FEATURES], coeffs: &AttractionCoeffs) -> f64 {
    count + dot(features, coeffs)
}

fn dot(a: &[f64; N_FEATURES], b: &[f64; N_FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, t)| x * t).sum()
}

/// Linearized functional forms of `ln f(d)` (d in km):
///
/// | form | ln f |
/// |------|------|
/// | E    | ϑ0·d |
/// | PE   | ϑ0·d + ϑ1·ln d |
/// | L    | ϑ0·ln²d + ϑ1·ln d |
/// | LE   | ϑ0·ln²d + ϑ1·ln d + ϑ2·d |
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeterrenceForm {
    E,
    #[serde(alias = "EP")]
    PE,
    L,
    LE,
}

impl DeterrenceForm {
    pub const ALL: [DeterrenceForm; 4] = [
        DeterrenceForm::E,
        DeterrenceForm::PE,
        DeterrenceForm::L,
        DeterrenceForm::LE,
    ];

    pub fn n_params(self) -> usize {
        match self {
            DeterrenceForm::E => 1,
            DeterrenceForm::PE | DeterrenceForm::L => 2,
            DeterrenceForm::LE => 3,
        }
    }

    /// Basis functions in parameter order; unused slots are zero.
    pub fn basis(self, d_km: f64) -> [f64; 3] {
        let d = d_km.max(MIN_DISTANCE_KM);
        let ln = d.ln();
        match self {
            DeterrenceForm::E => [d, 0.0, 0.0],
            DeterrenceForm::PE => [d, ln, 0.0],
            DeterrenceForm::L => [ln * ln, ln, 0.0],
            DeterrenceForm::LE => [ln * ln, ln, d],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterrenceParams {
    pub form: DeterrenceForm,
    pub params: Vec<f64>,
    /// Beyond this distance the weight is zero.
    #[serde(default)]
    pub cutoff_km: Option<f64>,
}

impl DeterrenceParams {
    pub fn new(form: DeterrenceForm, params: &[f64]) -> Result<Self> {
        let p = DeterrenceParams {
            form,
            params: params.to_vec(),
            cutoff_km: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// `f ≡ 1`.
    pub fn flat() -> Self {
        DeterrenceParams {
            form: DeterrenceForm::E,
            params: alloc::vec![0.0],
            cutoff_km: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff_km: f64) -> Self {
        self.cutoff_km = Some(cutoff_km);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.form.n_params() {
            return Err(Error::Schema(format!(
                "deterrence form {:?} takes {} parameters, got {}",
                self.form,
                self.form.n_params(),
                self.params.len()
            )));
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite deterrence parameter".into()));
        }
        Ok(())
    }

    /// `ln f(d)`, `-∞` beyond the cutoff. Distances are floored at
    /// [`MIN_DISTANCE_KM`].
    pub fn log_f(&self, d_km: f64) -> f64 {
        if let Some(c) = self.cutoff_km {
            if d_km > c {
                return f64::NEG_INFINITY;
            }
        }
        let b = self.form.basis(d_km);
        self.params.iter().zip(b.iter()).map(|(t, x)| t * x).sum()
    }

    pub fn f(&self, d_km: f64) -> f64 {
        self.log_f(d_km).exp()
    }

    /// First local minimum of `ln f` on `(MIN_DISTANCE_KM, max_km]`, scanned on
    /// a logarithmic grid and refined by bisection on the slope. `None` if the
    /// function keeps decreasing.
    pub fn first_minimum_km(&self, max_km: f64) -> Option<f64> {
        let probe = DeterrenceParams {
            cutoff_km: None,
            ..self.clone()
        };
        let slope = |d: f64| {
            let h = d * 1e-6;
            probe.log_f(d + h) - probe.log_f(d - h)
        };
        let steps = 4000;
        let (lo, hi) = (MIN_DISTANCE_KM * 1.01, max_km);
        let ratio = (hi / lo).ln() / steps as f64;
        let mut prev = lo;
        for i in 1..=steps {
            let d = lo * (ratio * i as f64).exp();
            if slope(prev) < 0.0 && slope(d) > 0.0 {
                let (mut a, mut b) = (prev, d);
                for _ in 0..100 {
                    let m = 0.5 * (a + b);
                    if slope(m) < 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev = d;
        }
        None
    }
}

/// Attraction and deterrence parameters for every purpose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DestinationModel {
    pub attraction: PerPurpose<AttractionCoeffs>,
    pub deterrence: PerPurpose<DeterrenceParams>,
}

impl DestinationModel {
    /// Default coefficients estimated from the German national travel survey.
    /// Attraction: only θ0 (residential area) and θ4..θ7 (POI counts) are
    /// non-zero. Deterrence distances are in km; the school form has its
    /// minimum at 827 km, beyond which its weight is zero.
    pub fn reference() -> Self {
        let theta = |t0: f64, t4: f64, t5: f64, t6: f64, t7: f64| {
            let mut t = [0.0; N_FEATURES];
            t[0] = t0;
            t[4] = t4;
            t[5] = t5;
            t[6] = t6;
            t[7] = t7;
            t
        };
        DestinationModel {
            attraction: PerPurpose {
                home: theta(0.0327, 0.0, 314.09, 1679.18, 0.0),
                work: theta(0.0, 727.14, 280.69, 611.39, 0.0),
                school: theta(0.0, 339.04, 132.36, 2115.64, 3061.74),
                shopping: theta(0.0, 0.0, 348.44, 0.0, 0.0),
                other: theta(0.0370, 2789.23, 2179.04, 1966.55, 0.0),
            },
            deterrence: PerPurpose {
                home: DeterrenceParams::flat(),
                work: DeterrenceParams {
                    form: DeterrenceForm::PE,
                    params: alloc::vec![-0.035, -0.919],
                    cutoff_km: None,
                },
                school: DeterrenceParams {
                    form: DeterrenceForm::LE,
                    params: alloc::vec![-0.235, -1.176, 0.005],
                    cutoff_km: Some(827.0),
                },
                shopping: DeterrenceParams {
                    form: DeterrenceForm::L,
                    params: alloc::vec![-0.215, -1.414],
                    cutoff_km: None,
                },
                other: DeterrenceParams {
                    form: DeterrenceForm::L,
                    params: alloc::vec![-0.180, -1.067],
                    cutoff_km: None,
                },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (p, theta) in self.attraction.iter() {
            if theta.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::Schema(format!(
                    "attraction coefficients for {p} must be finite and non-negative"
                )));
            }
        }
        for (_, d) in self.deterrence.iter() {
            d.validate()?;
        }
        Ok(())
    }

    pub fn attraction(&self, building: &Building, purpose: ActivityType) -> f64 {
        attraction(building, &self.attraction[purpose])
    }

    pub fn log_deterrence(&self, d_km: f64, purpose: ActivityType) -> f64 {
        self.deterrence[purpose].log_f(d_km)
    }
}

/// Distances between destination cells, meters.
pub trait CellDistances {
    fn n_cells(&self) -> usize;
    fn distance_m(&self, from: usize, to: usize) -> f64;
}

/// Great-circle distances between cell centroids; used when no routing matrix
/// was precomputed.
#[derive(Clone, Debug)]
pub struct BeelineDistances {
    pub centroids: Vec<LonLat>,
}

impl CellDistances for BeelineDistances {
    fn n_cells(&self) -> usize {
        self.centroids.len()
    }

    fn distance_m(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            haversine_m(self.centroids[from], self.centroids[to])
        }
    }
}

impl<T: CellDistances + ?Sized> CellDistances for &T {
    fn n_cells(&self) -> usize {
        (**self).n_cells()
    }
    fn distance_m(&self, from: usize, to: usize) -> f64 {
        (**self).distance_m(from, to)
    }
}

/// Choice probabilities over cells for a trip from `origin`:
/// `P(c) ∝ A_c · f(d(origin, c))`, evaluated in log space.
/// With `flat = true` deterrence is ignored (home choice without census).
pub fn destination_probabilities<D: CellDistances + ?Sized>(
    origin: usize,
    purpose: ActivityType,
    cell_attraction: &[f64],
    distances: &D,
    deterrence: &DeterrenceParams,
    flat: bool,
) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = cell_attraction
        .iter()
        .enumerate()
        .map(|(c, &a)| {
            if a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let lf = if flat {
                0.0
            } else {
                deterrence.log_f(distances.distance_m(origin, c) / 1000.0)
            };
            a.ln() + lf
        })
        .collect();
    normalize_log_weights(&mut v).map_err(|_| Error::DegenerateChoice {
        purpose,
        origin,
        detail: format!(
            "all {} candidate cells have zero weight (total attraction {})",
            cell_attraction.len(),
            cell_attraction.iter().sum::<f64>()
        ),
    })?;
    Ok(v)
}

/// In-place softmax of log-weights. Fails if every entry is `-∞`/NaN.
pub fn normalize_log_weights(v: &mut [f64]) -> core::result::Result<(), ()> {
    let max = v
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(());
    }
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = if x.is_finite() { (*x - max).exp() } else { 0.0 };
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::Landuse;

    fn bare() -> Building {
        Building::bare(1, LonLat::new(0.0, 0.0), 120.0)
    }

    #[test]
    fn bare_building_has_unit_attraction() {
        let m = DestinationModel::reference();
        for p in ActivityType::ALL {
            assert_eq!(m.attraction(&bare(), p), 1.0);
        }
    }

    #[test]
    fn reference_attraction_values() {
        let m = DestinationModel::reference();
        let mut shop = bare();
        shop.n_shops = 1;
        assert!((m.attraction(&shop, ActivityType::Shopping) - 349.44).abs() < 1e-9);
        let mut house = bare();
        house.area = 200.0;
        house.landuse = Landuse::Residential;
        assert!((m.attraction(&house, ActivityType::Home) - 7.54).abs() < 1e-9);
    }

    #[test]
    fn reference_deterrence_values() {
        let m = DestinationModel::reference();
        assert!(m.log_deterrence(1.0, ActivityType::Shopping).abs() < 1e-12);
        assert!((m.log_deterrence(1.0, ActivityType::Work) + 0.035).abs() < 1e-12);
        assert_eq!(m.deterrence.school.f(900.0), 0.0);
        assert!(m.deterrence.school.f(800.0) > 0.0);
        assert_eq!(m.log_deterrence(3.0, ActivityType::Home), 0.0);
    }

    #[test]
    fn distance_floor_applies() {
        let d = &DestinationModel::reference().deterrence.shopping;
        assert_eq!(d.log_f(0.0), d.log_f(MIN_DISTANCE_KM));
        assert_eq!(d.log_f(0.01), d.log_f(MIN_DISTANCE_KM));
        assert!(d.log_f(0.0).is_finite());
    }

    #[test]
    fn school_form_minimum_is_finite() {
        // rounded coefficients put the minimum near 870 km
        let school = DeterrenceParams::new(DeterrenceForm::LE, &[-0.235, -1.176, 0.005]).unwrap();
        let m = school.first_minimum_km(5000.0).unwrap();
        assert!(m > 800.0 && m < 900.0, "{m}");
        let shop = DeterrenceParams::new(DeterrenceForm::L, &[-0.215, -1.414]).unwrap();
        assert!(shop.first_minimum_km(5000.0).is_none());
    }

    #[test]
    fn two_cells_odds_match_closed_form() {
        struct Fixed;
        impl CellDistances for Fixed {
            fn n_cells(&self) -> usize {
                3
            }
            fn distance_m(&self, _: usize, to: usize) -> f64 {
                [0.0, 1000.0, 2000.0][to]
            }
        }
        let det = DestinationModel::reference().deterrence.shopping;
        let p = destination_probabilities(0, ActivityType::Shopping, &[0.0, 5.0, 5.0], &Fixed, &det, false)
            .unwrap();
        let ln2 = core::f64::consts::LN_2;
        let odds = (0.215 * ln2 * ln2 + 1.414 * ln2).exp();
        assert!((p[1] / p[2] - odds).abs() < 1e-12);
        assert_eq!(p[0], 0.0);
    }

    #[test]
    fn degenerate_when_all_beyond_cutoff() {
        struct Far;
        impl CellDistances for Far {
            fn n_cells(&self) -> usize {
                2
            }
            fn distance_m(&self, _: usize, _: usize) -> f64 {
                1.0e6
            }
        }
        let det = DestinationModel::reference().deterrence.school;
        let err = destination_probabilities(0, ActivityType::School, &[1.0, 1.0], &Far, &det, false);
        assert!(matches!(err, Err(Error::DegenerateChoice { .. })));
    }
}
