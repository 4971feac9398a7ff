//! Fitting a [`CalibrationBundle`] from a trip-diary survey.
//!
//! Per purpose: attraction coefficients from destination frequencies (with
//! feature ranking and forward selection), then deterrence coefficients for
//! each functional form with attraction held fixed, and the form whose
//! simulated trip distances match the survey best. Chain tables and dwell
//! mixtures come from the person-days.

pub mod attraction;
pub mod chains;
pub mod deterrence;
pub mod survey;
pub mod synthetic;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityType, PerPurpose};
use crate::building::N_FEATURES;
use crate::bundle::CalibrationBundle;
use crate::choice::{aggregated_attraction, AttractionCoeffs, BeelineDistances, CellDistances, DestinationModel, DeterrenceForm, DeterrenceParams};
use crate::error::{Error, Result};
use crate::geo::LonLat;
use crate::grid::Grid;
use crate::routing::DEFAULT_BIN_WIDTH_M;

use self::attraction::{rank_and_select_features, FeatureSelection, SELECTION_EPSILON};
use self::chains::{build_chain_tables, fit_dwell_mixtures, MAX_COMPONENTS};
use self::deterrence::{fit_deterrence, ks_per_form, ks_tie_tolerance, select_deterrence_form, BinnedChoiceSets, DeterrenceFit, FormSelection, KS_SAMPLES};
use self::survey::SurveyDay;

/// Aggregated features of one calibration cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: u32,
    pub centroid: LonLat,
    /// Number of buildings.
    pub count: f64,
    pub features: [f64; N_FEATURES],
}

impl CellRecord {
    pub fn attraction(&self, theta: &AttractionCoeffs) -> f64 {
        aggregated_attraction(self.count, &self.features, theta)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellTable {
    pub cells: Vec<CellRecord>,
}

impl CellTable {
    pub fn from_grid(grid: &Grid) -> Self {
        CellTable {
            cells: grid
                .cells()
                .iter()
                .map(|c| CellRecord {
                    id: c.id,
                    centroid: c.centroid,
                    count: c.members.len() as f64,
                    features: c.features,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.cells.iter().enumerate() {
            if c.id as usize != i {
                return Err(Error::Schema("cell ids must be 0, 1, 2, ... in order".into()));
            }
            if !(c.count >= 1.0) || c.features.iter().any(|f| !(*f >= 0.0)) {
                return Err(Error::Schema(alloc::format!("cell {i} has invalid features")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn attraction(&self, theta: &AttractionCoeffs) -> Vec<f64> {
        self.cells.iter().map(|c| c.attraction(theta)).collect()
    }

    pub fn beeline_distances(&self) -> BeelineDistances {
        BeelineDistances {
            centroids: self.cells.iter().map(|c| c.centroid).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CalibrationConfig {
    pub selection_epsilon: f64,
    pub bin_width_m: f64,
    pub ks_samples: usize,
    /// `None`: the two-sample 5 % critical value for the sample sizes.
    pub ks_tie_tolerance: Option<f64>,
    pub max_components: usize,
    pub seed: u64,
    /// Purposes whose deterrence is fitted; `home` is left flat.
    pub forms: Vec<DeterrenceForm>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            selection_epsilon: SELECTION_EPSILON,
            bin_width_m: DEFAULT_BIN_WIDTH_M,
            ks_samples: KS_SAMPLES,
            ks_tie_tolerance: None,
            max_components: MAX_COMPONENTS,
            seed: 0,
            forms: DeterrenceForm::ALL.to_vec(),
        }
    }
}

/// Diagnostics of one purpose.
#[derive(Clone, Debug)]
pub struct PurposeReport {
    pub purpose: ActivityType,
    pub trips: usize,
    pub selection: Option<FeatureSelection>,
    pub deterrence_fits: Vec<DeterrenceFit>,
    pub form: Option<FormSelection>,
}

#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub purposes: Vec<PurposeReport>,
    pub chain_keys: usize,
    pub orphaned_lengths: usize,
    pub mixtures: usize,
}

/// Trips grouped by purpose as `(origin, destination)` cells.
pub fn trips_by_purpose(days: &[SurveyDay]) -> PerPurpose<Vec<(u32, u32)>> {
    let mut out: PerPurpose<Vec<(u32, u32)>> = PerPurpose::default();
    for d in days {
        for t in d.trips() {
            out[t.purpose].push((t.origin, t.destination));
        }
    }
    out
}

/// Attraction and deterrence for one purpose. Deterrence is skipped for
/// `home`.
pub fn calibrate_purpose<D: CellDistances + ?Sized>(
    purpose: ActivityType,
    trips: &[(u32, u32)],
    cells: &CellTable,
    distances: &D,
    config: &CalibrationConfig,
) -> Result<(AttractionCoeffs, DeterrenceParams, PurposeReport)> {
    let mut per_cell = alloc::vec![0.0; cells.len()];
    for &(_, d) in trips {
        per_cell[d as usize] += 1.0;
    }
    let selection = rank_and_select_features(&per_cell, cells, config.selection_epsilon)?;
    let theta = selection.fit.theta;
    let mut report = PurposeReport {
        purpose,
        trips: trips.len(),
        selection: Some(selection),
        deterrence_fits: Vec::new(),
        form: None,
    };
    if purpose == ActivityType::Home {
        return Ok((theta, DeterrenceParams::flat(), report));
    }
    let cell_attraction = cells.attraction(&theta);
    let sets = BinnedChoiceSets::new(trips, &cell_attraction, distances, config.bin_width_m)?;
    let fits: Vec<DeterrenceFit> = config
        .forms
        .iter()
        .map(|&f| fit_deterrence(&sets, f))
        .collect::<Result<_>>()?;
    let observed: Vec<f64> = trips
        .iter()
        .map(|&(o, d)| distances.distance_m(o as usize, d as usize))
        .collect();
    let origins: Vec<u32> = trips.iter().map(|t| t.0).collect();
    let ks = ks_per_form(&fits, &observed, &origins, &cell_attraction, distances, config.ks_samples, config.seed);
    let tol = config
        .ks_tie_tolerance
        .unwrap_or_else(|| ks_tie_tolerance(observed.len(), config.ks_samples));
    let form = select_deterrence_form(ks, tol);
    let mut det = fits
        .iter()
        .find(|f| f.params.form == form.chosen)
        .map(|f| f.params.clone())
        .ok_or_else(|| Error::FitFailed("no deterrence form fitted".into()))?;
    // a fitted form that turns upward beyond the observed range gets
    // cut off at its minimum
    let max_km = observed.iter().copied().fold(0.0, f64::max) / 1000.0;
    if let Some(m) = det.first_minimum_km(20_000.0) {
        if m > max_km {
            det = det.with_cutoff(m);
        } else {
            log::warn!("{purpose}: fitted deterrence has a minimum at {m:.2} km inside the observed range");
        }
    }
    report.deterrence_fits = fits;
    report.form = Some(form);
    Ok((theta, det, report))
}

/// Full calibration. Purposes without any trip keep the reference
/// coefficients.
pub fn calibrate<D: CellDistances + ?Sized>(
    days: &[SurveyDay],
    cells: &CellTable,
    distances: &D,
    config: &CalibrationConfig,
) -> Result<(CalibrationBundle, CalibrationReport)> {
    if days.is_empty() {
        return Err(Error::FitFailed("empty survey".into()));
    }
    cells.validate()?;
    let reference = DestinationModel::reference();
    let mut model = reference.clone();
    let trips = trips_by_purpose(days);
    let mut purposes = Vec::new();
    for p in ActivityType::ALL {
        if trips[p].is_empty() {
            log::warn!("no {p} trips in the survey; keeping reference coefficients");
            purposes.push(PurposeReport {
                purpose: p,
                trips: 0,
                selection: None,
                deterrence_fits: Vec::new(),
                form: None,
            });
            continue;
        }
        let (theta, det, report) = calibrate_purpose(p, &trips[p], cells, distances, config)?;
        model.attraction[p] = theta;
        model.deterrence[p] = det;
        purposes.push(report);
    }
    let tables = build_chain_tables(days)?;
    tables.table.validate()?;
    let dwell = fit_dwell_mixtures(days, &tables.table, config.max_components, config.seed)?;
    let report = CalibrationReport {
        purposes,
        chain_keys: tables.table.len(),
        orphaned_lengths: tables.orphaned.values().map(|v| v.len()).sum(),
        mixtures: dwell.len(),
    };
    let bundle = CalibrationBundle::new(
        alloc::format!("calibrated from {} survey person-days", days.len()),
        model,
        tables.table,
        dwell,
    );
    Ok((bundle, report))
}
