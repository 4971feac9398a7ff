//! Stage orchestration: prepare (buildings, grid, distance matrix),
//! simulate, calibrate and validate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mobgen_core::calibration::survey::SurveyDay;
use mobgen_core::calibration::CellTable;
use mobgen_core::choice::{BeelineDistances, CellDistances};
use mobgen_core::geo::FocusIndex;
use mobgen_core::population::SocioDistribution;
use mobgen_core::routing::{RoadClasses, Router, DEFAULT_BIN_WIDTH_M, DEFAULT_DISTANCE_LIMIT_M};
use mobgen_core::simulate::{AgentSchedule, Scenario};
use mobgen_core::stats::jensen_shannon;
use mobgen_core::validation::{
    daily_distance, day_trips, od_metrics, temporal_shares, zonal_attraction, DistanceSummary, MetricReport, Stop, Trip,
    RESOLUTIONS_M,
};
use mobgen_core::{ActivityType, Building, CalibrationBundle, DestinationModel, DistanceMatrix, Grid, RoadGraph, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{Cache, KeyBuilder};
use crate::error::Result;
use crate::{formats, ingest, osm};

pub const DEFAULT_GRID_THRESHOLD_M: f64 = 150.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Routed,
    Beeline,
}

#[derive(Clone, Debug)]
pub struct PrepareConfig {
    pub osm: PathBuf,
    pub area: PathBuf,
    pub census: Option<PathBuf>,
    pub census_property: String,
    pub buffer_m: f64,
    pub grid_threshold_m: f64,
    pub metric: DistanceMetric,
}

impl PrepareConfig {
    pub fn new(osm: impl Into<PathBuf>, area: impl Into<PathBuf>) -> Self {
        PrepareConfig {
            osm: osm.into(),
            area: area.into(),
            census: None,
            census_property: ingest::CENSUS_PROPERTY.into(),
            buffer_m: 0.0,
            grid_threshold_m: DEFAULT_GRID_THRESHOLD_M,
            metric: DistanceMetric::Routed,
        }
    }
}

/// Which stages came from the cache.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheHits {
    pub buildings: bool,
    pub grid: bool,
    /// `None` in beeline mode, where no matrix exists.
    pub matrix: Option<bool>,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub buildings: Vec<Building>,
    pub grid: Grid,
    pub matrix: Option<DistanceMatrix>,
    pub hits: CacheHits,
    pub dirs: Vec<PathBuf>,
}

impl Prepared {
    pub fn cell_table(&self) -> CellTable {
        CellTable::from_grid(&self.grid)
    }
}

const BUILDINGS_FILE: &str = "buildings.ndjson";
const GRID_FILE: &str = "grid.json";
const MATRIX_FILE: &str = "matrix.bin";

/// Builds or loads buildings, grid and (routed mode) the distance matrix.
/// The grid is keyed on the bytes of the building table and the matrix on
/// the bytes of the grid, so a change upstream that leaves an artifact
/// byte-identical keeps everything below it.
pub fn prepare(cfg: &PrepareConfig, cache: &Cache, model: &DestinationModel) -> Result<Prepared> {
    for p in [Some(&cfg.osm), Some(&cfg.area), cfg.census.as_ref()].into_iter().flatten() {
        if !p.is_file() {
            return Err(crate::error::Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    if !(cfg.buffer_m >= 0.0) {
        return Err(mobgen_core::Error::InvalidArgument("buffer must be ≥ 0".into()).into());
    }
    let osm_data = std::cell::OnceCell::new();
    let load_osm = || -> Result<&osm::OsmData> {
        if osm_data.get().is_none() {
            let d = osm::read_osm(&cfg.osm)?;
            log::info!(
                "read {}: {} nodes, {} ways, {} relations",
                cfg.osm.display(),
                d.nodes.len(),
                d.ways.len(),
                d.relations.len()
            );
            let _ = osm_data.set(d);
        }
        Ok(osm_data.get().unwrap())
    };
    let focus = ingest::parse_focus_area(&cfg.area)?;

    let bkey = KeyBuilder::new("buildings/1")
        .file(&cfg.osm)?
        .file(&cfg.area)?
        .optional_file(cfg.census.as_deref())?
        .str(&cfg.census_property)
        .f64(cfg.buffer_m)
        .finish();
    let (buildings, bhit) = cache.get_or_build(
        "buildings",
        &bkey,
        |dir| formats::read_buildings(&dir.join(BUILDINGS_FILE)),
        |dir| {
            let area = if cfg.buffer_m > 0.0 {
                ingest::buffer_area(&focus, cfg.buffer_m)?
            } else {
                focus.clone()
            };
            let mut ex = ingest::extract_buildings(load_osm()?, &area)?;
            if let Some(c) = &cfg.census {
                let total = ingest::apply_census_file(&mut ex, c, &cfg.census_property)?;
                log::info!("assigned a census population of {total}");
            }
            log::info!("extracted {} buildings", ex.buildings.len());
            formats::write_buildings(&dir.join(BUILDINGS_FILE), &ex.buildings)?;
            Ok(ex.buildings)
        },
    )?;
    let bdir = cache.entry_dir("buildings", &bkey);

    let gkey = KeyBuilder::new("grid/1")
        .file(&bdir.join(BUILDINGS_FILE))?
        .file(&cfg.area)?
        .f64(cfg.grid_threshold_m)
        .finish();
    let (grid, ghit) = cache.get_or_build(
        "grid",
        &gkey,
        |dir| formats::read_grid(&dir.join(GRID_FILE), &buildings, model),
        |dir| {
            let grid = Grid::build(&buildings, &FocusIndex::new(&focus), cfg.grid_threshold_m, model)?;
            log::info!("grid: {} cells over {} buildings", grid.len(), buildings.len());
            formats::write_grid(&dir.join(GRID_FILE), &grid, &buildings)?;
            Ok(grid)
        },
    )?;
    let gdir = cache.entry_dir("grid", &gkey);
    let mut dirs = vec![bdir, gdir.clone()];

    let (matrix, mhit) = match cfg.metric {
        DistanceMetric::Beeline => {
            log::warn!("beeline distances: no road network is used, destination choice quality will suffer");
            (None, None)
        }
        DistanceMetric::Routed => {
            let mkey = KeyBuilder::new("matrix/1")
                .file(&gdir.join(GRID_FILE))?
                .file(&cfg.osm)?
                .f64(DEFAULT_DISTANCE_LIMIT_M)
                .finish();
            let (m, hit) = cache.get_or_build(
                "matrix",
                &mkey,
                |dir| formats::read_matrix(&dir.join(MATRIX_FILE)),
                |dir| {
                    let m = routed_matrix(load_osm()?, &grid)?;
                    formats::write_matrix(&dir.join(MATRIX_FILE), &m)?;
                    Ok(m)
                },
            )?;
            dirs.push(cache.entry_dir("matrix", &mkey));
            (Some(m), Some(hit))
        }
    };
    Ok(Prepared {
        buildings,
        grid,
        matrix,
        hits: CacheHits {
            buildings: bhit,
            grid: ghit,
            matrix: mhit,
        },
        dirs,
    })
}

/// One bounded sweep per cell, rows in parallel.
pub fn routed_matrix(osm: &osm::OsmData, grid: &Grid) -> Result<DistanceMatrix> {
    let graph = RoadGraph::build(&osm.nodes, osm.highways(), &RoadClasses::default())?;
    log::info!("road graph: {} nodes, {} edges", graph.n_nodes(), graph.n_edges());
    let centroids = grid.centroids();
    let snapped: Vec<usize> = centroids.iter().map(|&c| graph.snap(c)).collect();
    let rows: Vec<_> = (0..centroids.len())
        .into_par_iter()
        .map(|s| graph.distance_row(s, &centroids, &snapped, DEFAULT_DISTANCE_LIMIT_M))
        .collect();
    let mut m = DistanceMatrix::zeros(centroids.len(), DEFAULT_BIN_WIDTH_M);
    for (s, (row, methods)) in rows.iter().enumerate() {
        m.set_row(s, row, methods);
    }
    Ok(m)
}

pub struct SimulationConfig<'a> {
    pub agents: usize,
    pub days: usize,
    /// `Undefined` keeps every day's weekday undefined.
    pub start: Weekday,
    pub seed: u64,
    pub socio: Option<&'a SocioDistribution>,
}

pub fn simulate(prepared: &Prepared, bundle: &CalibrationBundle, cfg: &SimulationConfig) -> Result<Vec<AgentSchedule>> {
    let mut grid = prepared.grid.clone();
    grid.attach_model(&prepared.buildings, &bundle.destination);
    match &prepared.matrix {
        Some(m) => simulate_with(&prepared.buildings, &grid, m, bundle, cfg),
        None => {
            let d = BeelineDistances {
                centroids: grid.centroids(),
            };
            simulate_with(&prepared.buildings, &grid, &d, bundle, cfg)
        }
    }
}

/// Agents run in parallel; each has its own random streams, so the result
/// does not depend on the thread count.
pub fn simulate_with<D: CellDistances + Sync>(
    buildings: &[Building],
    grid: &Grid,
    distances: D,
    bundle: &CalibrationBundle,
    cfg: &SimulationConfig,
) -> Result<Vec<AgentSchedule>> {
    if cfg.agents == 0 || cfg.days == 0 {
        return Err(mobgen_core::Error::InvalidArgument("agents and days must be at least 1".into()).into());
    }
    let scenario = Scenario::new(buildings, grid, distances, bundle)?;
    let out: Vec<AgentSchedule> = (0..cfg.agents as u64)
        .into_par_iter()
        .map(|id| {
            let agent = scenario.create_agent(id, cfg.socio, cfg.seed);
            scenario.simulate_agent(agent, cfg.days, cfg.start, cfg.seed)
        })
        .collect::<mobgen_core::Result<_>>()?;
    let fallbacks: u32 = out.iter().map(|s| s.single_activity_fallbacks).sum();
    if fallbacks > 0 {
        log::warn!("{fallbacks} agent-days fell back to a single-activity chain");
    }
    Ok(out)
}

// ---- validation ----

/// Survey days as stops at cell centroids.
pub fn survey_stops(days: &[SurveyDay], cells: &CellTable) -> Vec<Vec<Stop>> {
    days.iter()
        .map(|d| {
            let dwell = d.dwell_hours();
            (0..d.cells.len())
                .map(|k| Stop {
                    kind: d.chain.0[k],
                    stay_minutes: dwell.get(k).map(|h| h * 60.0),
                    location: cells.cells[d.cells[k] as usize].centroid,
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Activity type, or `ALL`.
    pub activity: String,
    pub resolution_m: f64,
    #[serde(flatten)]
    pub metrics: MetricReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub zonal_attraction: Vec<MetricRow>,
    pub origin_destination: Vec<MetricRow>,
    pub daily_distance_model: DistanceSummary,
    pub daily_distance_survey: DistanceSummary,
    /// Mean over time steps of the Jensen–Shannon divergence between the
    /// model and survey activity shares.
    pub temporal_js_mean: f64,
    pub temporal_step_minutes: f64,
    pub temporal_model: Vec<[f64; 6]>,
    pub temporal_survey: Vec<[f64; 6]>,
}

fn purpose_rows(
    model: &[Trip],
    survey: &[Trip],
    resolutions: &[f64],
    metric: fn(&[Trip], &[Trip], f64) -> mobgen_core::Result<MetricReport>,
) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for &res in resolutions {
        let groups = std::iter::once(None).chain(ActivityType::ALL.iter().copied().map(Some));
        for g in groups {
            let pick = |t: &&Trip| g.is_none_or(|p| t.purpose == p);
            let m: Vec<Trip> = model.iter().filter(pick).copied().collect();
            let s: Vec<Trip> = survey.iter().filter(pick).copied().collect();
            if m.is_empty() || s.is_empty() {
                continue;
            }
            rows.push(MetricRow {
                activity: g.map_or("ALL", |p| p.as_str()).to_string(),
                resolution_m: res,
                metrics: metric(&m, &s, res)?,
            });
        }
    }
    Ok(rows)
}

pub fn validate<R: Router + Sync + ?Sized>(
    model: &[Vec<Vec<Stop>>],
    survey: &[Vec<Stop>],
    router: &R,
    resolutions: &[f64],
    step_minutes: f64,
) -> Result<ValidationReport> {
    let model_days: Vec<Vec<Stop>> = model.iter().flatten().cloned().collect();
    let model_trips: Vec<Trip> = model_days.iter().flat_map(|d| day_trips(d)).collect();
    let survey_trips: Vec<Trip> = survey.iter().flat_map(|d| day_trips(d)).collect();
    if model_trips.is_empty() || survey_trips.is_empty() {
        return Err(mobgen_core::Error::InvalidArgument("both model and survey need at least one trip".into()).into());
    }
    let zonal = purpose_rows(&model_trips, &survey_trips, resolutions, zonal_attraction)?;
    let od = purpose_rows(&model_trips, &survey_trips, resolutions, od_metrics)?;
    let survey_agents: Vec<Vec<Vec<Stop>>> = survey.iter().map(|d| vec![d.clone()]).collect();
    let tm = temporal_shares(model, router, step_minutes)?;
    let ts = temporal_shares(&survey_agents, router, step_minutes)?;
    let temporal_js_mean = tm.iter().zip(&ts).map(|(a, b)| jensen_shannon(a, b)).sum::<f64>() / tm.len().max(1) as f64;
    Ok(ValidationReport {
        zonal_attraction: zonal,
        origin_destination: od,
        daily_distance_model: daily_distance(&model_days, router),
        daily_distance_survey: daily_distance(survey, router),
        temporal_js_mean,
        temporal_step_minutes: step_minutes,
        temporal_model: tm,
        temporal_survey: ts,
    })
}

pub fn default_resolutions() -> Vec<f64> {
    RESOLUTIONS_M.to_vec()
}

fn table(out: &mut String, title: &str, rows: &[MetricRow]) {
    let mut resolutions: Vec<f64> = rows.iter().map(|r| r.resolution_m).collect();
    resolutions.dedup();
    for res in resolutions {
        let _ = writeln!(out, "{title} ({} m)", res);
        let _ = writeln!(out, "{:<10} {:>10} {:>8} {:>8} {:>15}", "Activity", "Resolution", "R²", "MAE", "Jensen-Shannon");
        for r in rows.iter().filter(|r| r.resolution_m == res) {
            let _ = writeln!(
                out,
                "{:<10} {:>8} m {:>8.3} {:>8.3} {:>15.3}",
                r.activity, r.resolution_m, r.metrics.r2, r.metrics.mae, r.metrics.jensen_shannon
            );
        }
        out.push('\n');
    }
}

impl ValidationReport {
    /// Aligned-column tables, one block per resolution.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        table(&mut s, "Zonal attraction", &self.zonal_attraction);
        table(&mut s, "Origin-destination", &self.origin_destination);
        let _ = writeln!(s, "Daily distance (km)");
        let _ = writeln!(s, "{:<8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "Source", "n", "Q25", "Median", "Q75", "Mean", "±95%");
        for (name, d) in [("model", &self.daily_distance_model), ("survey", &self.daily_distance_survey)] {
            let _ = writeln!(
                s,
                "{:<8} {:>8} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                name, d.n, d.q25_km, d.median_km, d.q75_km, d.mean_km, d.ci95_km
            );
        }
        let _ = writeln!(
            s,
            "\nActivity shares over the day: mean Jensen-Shannon {:.4} ({} min steps)",
            self.temporal_js_mean, self.temporal_step_minutes
        );
        s
    }
}

pub fn write_report(out: &Path, report: &ValidationReport) -> Result<(PathBuf, PathBuf)> {
    let json = out.with_extension("json");
    let text = out.with_extension("txt");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    }
    let body = serde_json::to_string_pretty(report)? + "\n";
    std::fs::write(&json, body).map_err(|e| crate::error::Error::io(&json, e))?;
    std::fs::write(&text, report.to_text()).map_err(|e| crate::error::Error::io(&text, e))?;
    Ok((json, text))
}
