use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mobgen::cache::{Cache, DEFAULT_CACHE_DIR};
use mobgen::pipeline::{self, DistanceMetric, PrepareConfig, Prepared, SimulationConfig};
use mobgen::{default_bundle, formats, Error};
use mobgen_core::calibration::survey::{assemble_days, SurveyDay};
use mobgen_core::calibration::synthetic::{generate_synthetic_survey, SurveyOptions, SyntheticCity};
use mobgen_core::calibration::{calibrate, CalibrationConfig, CellTable};
use mobgen_core::routing::{BeelineRouter, RoadClasses};
use mobgen_core::{CalibrationBundle, RoadGraph, Weekday};

#[derive(Parser)]
#[command(name = "mobgen", version, about = "Synthetic activity schedules from OpenStreetMap data")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract buildings, cluster the grid and precompute cell distances.
    Prepare {
        #[command(flatten)]
        model: ModelArgs,
        /// Also write the cell table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a parameter bundle to a trip survey.
    Calibrate {
        #[command(flatten)]
        cells: CellArgs,
        #[arg(long)]
        survey: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output bundle path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate activity schedules.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Parameter bundle (default: built-in reference parameters).
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Joint socio-demographic distribution as a JSON list of atoms.
        #[arg(long)]
        socio: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        agents: usize,
        #[arg(long, default_value_t = 1)]
        days: usize,
        /// First simulated day (MO..SU); undefined when omitted.
        #[arg(long, value_parser = parse_weekday, default_value = "undefined")]
        weekday: Weekday,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare generated schedules with a survey.
    Validate {
        #[command(flatten)]
        cells: CellArgs,
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        schedules: PathBuf,
        /// Report path; `.json` and `.txt` files are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample a survey from a bundle on a cell table.
    Synth {
        /// Cell table (default: the built-in 32 × 32 lattice city).
        #[arg(long)]
        cells: Option<PathBuf>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        socio: Option<PathBuf>,
        /// Person-days.
        #[arg(long, default_value_t = 1000)]
        agents: usize,
        #[arg(long, value_parser = parse_weekday)]
        weekday: Option<Weekday>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for `survey.csv` and `cells.json`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    osm: PathBuf,
    /// Focus area as GeoJSON.
    #[arg(long)]
    area: PathBuf,
    /// Census cells as GeoJSON with a `population` property.
    #[arg(long)]
    census: Option<PathBuf>,
    /// Buffer around the focus area, meters.
    #[arg(long, default_value_t = 0.0)]
    buffer: f64,
    /// Base grid threshold, meters.
    #[arg(long = "grid-res", default_value_t = pipeline::DEFAULT_GRID_THRESHOLD_M)]
    grid_res: f64,
    #[arg(long = "dist-metric", value_enum, default_value_t = DistanceMetric::Routed)]
    dist_metric: DistanceMetric,
}

/// Where survey cell ids point: an explicit cell table or a prepared model.
#[derive(Args, Clone)]
struct CellArgs {
    #[arg(long, conflicts_with = "osm")]
    cells: Option<PathBuf>,
    #[arg(long, requires = "area")]
    osm: Option<PathBuf>,
    #[arg(long)]
    area: Option<PathBuf>,
    #[arg(long)]
    census: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    buffer: f64,
    #[arg(long = "grid-res", default_value_t = pipeline::DEFAULT_GRID_THRESHOLD_M)]
    grid_res: f64,
    #[arg(long = "dist-metric", value_enum, default_value_t = DistanceMetric::Beeline)]
    dist_metric: DistanceMetric,
}

fn parse_weekday(s: &str) -> Result<Weekday, String> {
    Weekday::parse(s).ok_or_else(|| format!("unknown weekday `{s}`"))
}

/// Error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

const EXIT_INTERNAL: u8 = 1;
const EXIT_INPUT_MISSING: u8 = 2;
const EXIT_BUNDLE_MISSING: u8 = 3;
const EXIT_SURVEY: u8 = 4;

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        let code = match &error {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => EXIT_INPUT_MISSING,
            _ => EXIT_INTERNAL,
        };
        Failure { code, error }
    }
}

fn with_code(code: u8) -> impl Fn(Error) -> Failure {
    move |error| Failure { code, error }
}

type CliResult<T> = Result<T, Failure>;

fn cache() -> Cache {
    Cache::from_env(Path::new(DEFAULT_CACHE_DIR))
}

fn load_bundle(path: Option<&Path>) -> CliResult<CalibrationBundle> {
    match path {
        Some(p) if !p.is_file() => Err(Failure {
            code: EXIT_BUNDLE_MISSING,
            error: Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)),
        }),
        Some(p) => Ok(formats::read_bundle(p)?),
        None => Ok(default_bundle()?),
    }
}

fn prepare(m: &ModelArgs, bundle: &CalibrationBundle) -> CliResult<Prepared> {
    let cfg = PrepareConfig {
        census: m.census.clone(),
        buffer_m: m.buffer,
        grid_threshold_m: m.grid_res,
        metric: m.dist_metric,
        ..PrepareConfig::new(&m.osm, &m.area)
    };
    Ok(pipeline::prepare(&cfg, &cache(), &bundle.destination)?)
}

impl CellArgs {
    fn model_args(&self) -> Option<ModelArgs> {
        Some(ModelArgs {
            osm: self.osm.clone()?,
            area: self.area.clone()?,
            census: self.census.clone(),
            buffer: self.buffer,
            grid_res: self.grid_res,
            dist_metric: self.dist_metric,
        })
    }

    fn resolve(&self) -> CliResult<(CellTable, Option<Prepared>)> {
        if let Some(p) = &self.cells {
            return Ok((formats::read_cells(p)?, None));
        }
        let m = self.model_args().ok_or_else(|| Failure {
            code: EXIT_INPUT_MISSING,
            error: Error::parse("either --cells or --osm with --area is required"),
        })?;
        let prepared = prepare(&m, &default_bundle()?)?;
        Ok((prepared.cell_table(), Some(prepared)))
    }
}

fn read_survey(path: &Path, n_cells: usize) -> CliResult<Vec<SurveyDay>> {
    if !path.is_file() {
        return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)).into());
    }
    let records = formats::read_survey_file(path).map_err(with_code(EXIT_SURVEY))?;
    if records.is_empty() {
        return Err(Failure {
            code: EXIT_SURVEY,
            error: Error::from(mobgen_core::Error::FitFailed("empty survey".into())).in_file(path),
        });
    }
    assemble_days(&records, n_cells).map_err(|e| Failure {
        code: EXIT_SURVEY,
        error: Error::from(e).in_file(path),
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Prepare { model, out } => {
            let p = prepare(&model, &default_bundle()?)?;
            for d in &p.dirs {
                println!("{}", d.display());
            }
            if let Some(out) = out {
                formats::write_cells(&out, &p.cell_table())?;
            }
        }
        Command::Calibrate {
            cells,
            survey,
            seed,
            out,
        } => {
            let (table, prepared) = cells.resolve()?;
            let days = read_survey(&survey, table.len())?;
            let config = CalibrationConfig {
                seed,
                ..CalibrationConfig::default()
            };
            let matrix = prepared.as_ref().and_then(|p| p.matrix.as_ref());
            let result = match matrix {
                Some(m) => calibrate(&days, &table, m, &config),
                None => calibrate(&days, &table, &table.beeline_distances(), &config),
            };
            let (bundle, report) = result.map_err(|e| {
                let code = if matches!(e, mobgen_core::Error::FitFailed(_)) { EXIT_SURVEY } else { EXIT_INTERNAL };
                Failure {
                    code,
                    error: e.into(),
                }
            })?;
            for p in &report.purposes {
                log::info!(
                    "{:?}: {} trips, form {:?}, theta {:?}",
                    p.purpose,
                    p.trips,
                    p.form.as_ref().map(|f| f.chosen),
                    p.selection.as_ref().map(|s| &s.fit.theta)
                );
            }
            formats::write_bundle(&out, &bundle)?;
        }
        Command::Simulate {
            model,
            bundle,
            socio,
            agents,
            days,
            weekday,
            seed,
            out,
        } => {
            let bundle = load_bundle(bundle.as_deref())?;
            let socio = socio.as_deref().map(formats::read_socio).transpose()?;
            let prepared = prepare(&model, &bundle)?;
            let cfg = SimulationConfig {
                agents,
                days,
                start: weekday,
                seed,
                socio: socio.as_ref(),
            };
            let t = std::time::Instant::now();
            let schedules = pipeline::simulate(&prepared, &bundle, &cfg)?;
            log::info!("simulated {agents} agents × {days} days in {:.2?}", t.elapsed());
            let file = formats::SchedulesFile::from_schedules(&schedules, &prepared.buildings);
            formats::write_schedules(&out, &file)?;
        }
        Command::Validate {
            cells,
            survey,
            schedules,
            out,
        } => {
            let (table, _) = cells.resolve()?;
            let days = read_survey(&survey, table.len())?;
            let model = formats::read_schedules(&schedules)?;
            let survey_stops = pipeline::survey_stops(&days, &table);
            let model_stops = model.stops();
            let resolutions = pipeline::default_resolutions();
            let report = match (cells.dist_metric, cells.model_args()) {
                (DistanceMetric::Routed, Some(m)) => {
                    let osm = mobgen::osm::read_osm(&m.osm)?;
                    let graph = RoadGraph::build(&osm.nodes, osm.highways(), &RoadClasses::default())
                        .map_err(Error::from)?;
                    pipeline::validate(&model_stops, &survey_stops, &graph, &resolutions, 15.0)?
                }
                _ => {
                    let router = BeelineRouter {
                        speed_kmh: RoadClasses::default().fallback_kmh,
                    };
                    pipeline::validate(&model_stops, &survey_stops, &router, &resolutions, 15.0)?
                }
            };
            let (json, text) = pipeline::write_report(&out, &report)?;
            print!("{}", report.to_text());
            log::info!("wrote {} and {}", json.display(), text.display());
        }
        Command::Synth {
            cells,
            bundle,
            socio,
            agents,
            weekday,
            seed,
            out,
        } => {
            let bundle = load_bundle(bundle.as_deref())?;
            let socio = socio.as_deref().map(formats::read_socio).transpose()?;
            let table = match cells {
                Some(p) => formats::read_cells(&p)?,
                None => SyntheticCity::standard().cells,
            };
            let options = SurveyOptions {
                weekday,
                socio: socio.as_ref(),
            };
            let days = generate_synthetic_survey(&bundle, &table, &table.beeline_distances(), agents, &options, seed)
                .map_err(Error::from)?;
            let records: Vec<_> = days.iter().flat_map(|d| d.to_records()).collect();
            formats::write_survey_file(&out.join("survey.csv"), &records)?;
            formats::write_cells(&out.join("cells.json"), &table)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
