//! Synthetic city and survey generator used to check that calibration
//! recovers known parameters.
//!
//! The standard city is a 32 × 32 lattice of cells spaced 500 m apart around
//! (10.0° E, 51.0° N). Every cell holds 5 to 40 buildings split over the four
//! land-use classes with 80 to 400 m² each; roughly a third of the cells get
//! 1 to 6 shops, a quarter 1 to 8 offices, one in twenty a school and one in
//! a hundred a university. The layout is drawn from a fixed seed, so the
//! city is identical on every run.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::survey::SurveyDay;
use super::{CellRecord, CellTable};
use crate::activity::{ActivityType, PerPurpose, Weekday};
use crate::bundle::CalibrationBundle;
use crate::building::N_FEATURES;
use crate::choice::{BeelineDistances, CellDistances, DestinationModel};
use crate::error::{Error, Result};
use crate::geo::{LocalProjection, LonLat};
use crate::gmm::{ComponentRecord, GaussianMixture};
use crate::population::{agent_rng, sample_sociodemographics, streams, SocioDistribution};
use crate::schedule::{
    sample_dwell_times, Chain, ChainDistribution, ChainKey, ChainTable, DwellMixture, DwellTable, WeightedChain,
};
use crate::stats::Cumulative;

pub const LATTICE_SIDE: usize = 32;
pub const LATTICE_SPACING_M: f64 = 500.0;
pub const CITY_CENTER: LonLat = LonLat::new(10.0, 51.0);
const CITY_SEED: u64 = 0x5EED_C17E;
/// Speed used to turn trip distances into survey travel times, km/h.
pub const SURVEY_SPEED_KMH: f64 = 30.0;

#[derive(Clone, Debug)]
pub struct SyntheticCity {
    pub cells: CellTable,
    pub distances: BeelineDistances,
}

impl SyntheticCity {
    /// The standard 32 × 32 city.
    pub fn standard() -> Self {
        SyntheticCity::lattice(LATTICE_SIDE, LATTICE_SPACING_M, CITY_SEED)
    }

    pub fn lattice(side: usize, spacing: f64, seed: u64) -> Self {
        let proj = LocalProjection::new(CITY_CENTER);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = (side as f64 - 1.0) / 2.0;
        let mut cells = Vec::with_capacity(side * side);
        for iy in 0..side {
            for ix in 0..side {
                let xy = [(ix as f64 - half) * spacing, (iy as f64 - half) * spacing];
                let count = rng.random_range(5..=40u32);
                let mut f = [0.0; N_FEATURES];
                for _ in 0..count {
                    let slot = match rng.random::<f64>() {
                        u if u < 0.55 => 0,
                        u if u < 0.65 => 1,
                        u if u < 0.80 => 2,
                        _ => 3,
                    };
                    f[slot] += rng.random_range(80.0..400.0);
                    f[8 + slot] += 1.0;
                }
                if rng.random::<f64>() < 0.35 {
                    f[5] = rng.random_range(1..=6u32) as f64;
                }
                if rng.random::<f64>() < 0.25 {
                    f[4] = rng.random_range(1..=8u32) as f64;
                }
                if rng.random::<f64>() < 0.05 {
                    f[6] = 1.0;
                }
                if rng.random::<f64>() < 0.01 {
                    f[7] = 1.0;
                }
                cells.push(CellRecord {
                    id: cells.len() as u32,
                    centroid: proj.unproject(xy),
                    count: count as f64,
                    features: f,
                });
            }
        }
        let cells = CellTable { cells };
        let distances = cells.beeline_distances();
        SyntheticCity { cells, distances }
    }
}

/// Stand-in chain and dwell tables (not derived from any real survey): one
/// fully undefined distribution over common home-based chains, with dwell
/// mixtures whose first component models early and late leavers.
pub fn synthetic_schedule_tables() -> (ChainTable, DwellTable) {
    let chains: [(&str, f64); 14] = [
        ("H", 0.27),
        ("HWH", 0.20),
        ("HSH", 0.12),
        ("HOH", 0.12),
        ("HEH", 0.06),
        ("HWSH", 0.05),
        ("HSOH", 0.04),
        ("HOSH", 0.03),
        ("HWOH", 0.03),
        ("HEOH", 0.02),
        ("HSHOH", 0.02),
        ("HWHSH", 0.02),
        ("HO", 0.01),
        ("OH", 0.01),
    ];
    let mut table = ChainTable::default();
    table.insert(ChainDistribution {
        key: ChainKey::GLOBAL,
        chains: chains
            .iter()
            .map(|(c, p)| WeightedChain {
                chain: Chain::parse(c).unwrap(),
                probability: *p,
            })
            .collect(),
        sample_count: 10_000,
    });
    let mut dwell = DwellTable::default();
    for (c, _) in chains {
        let chain = Chain::parse(c).unwrap();
        if chain.len() < 2 {
            continue;
        }
        dwell
            .insert(DwellMixture {
                key: ChainKey::GLOBAL,
                mixture: synthetic_dwell_mixture(&chain),
                chain,
            })
            .unwrap();
    }
    (table, dwell)
}

fn typical_hours(a: ActivityType) -> f64 {
    match a {
        ActivityType::Home => 2.0,
        ActivityType::Work => 8.0,
        ActivityType::School => 6.0,
        ActivityType::Shopping => 0.75,
        ActivityType::Other => 1.5,
    }
}

fn synthetic_dwell_mixture(chain: &Chain) -> GaussianMixture {
    let d = chain.len() - 1;
    let component = |first: f64, weight: f64| {
        let mean: Vec<f64> = (0..d)
            .map(|i| if i == 0 { first } else { typical_hours(chain.0[i]) })
            .collect();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            let s = 0.2 * mean[i] + 0.1;
            cov[i * d + i] = s * s;
        }
        ComponentRecord {
            weight,
            mean,
            covariance: cov,
        }
    };
    let (early, late) = if chain.first() == ActivityType::Home { (7.0, 10.0) } else { (1.0, 3.0) };
    GaussianMixture::new(d, vec![component(early, 0.6), component(late, 0.4)]).unwrap()
}

/// Default bundle: reference destination coefficients plus the synthetic
/// schedule tables.
pub fn synthetic_truth_bundle() -> CalibrationBundle {
    let (chains, dwell) = synthetic_schedule_tables();
    CalibrationBundle::new(
        "reference destination coefficients; synthetic chain and dwell tables (no real survey data)",
        DestinationModel::reference(),
        chains,
        dwell,
    )
}

#[derive(Clone, Debug)]
pub struct SurveyOptions<'a> {
    /// `None`: every person-day gets a uniformly drawn day of the week.
    pub weekday: Option<Weekday>,
    pub socio: Option<&'a SocioDistribution>,
}

impl Default for SurveyOptions<'_> {
    fn default() -> Self {
        SurveyOptions {
            weekday: Some(Weekday::Undefined),
            socio: None,
        }
    }
}

/// Cell-level forward model with cached choice distributions.
struct CellChooser<'a, D> {
    distances: &'a D,
    model: &'a DestinationModel,
    attraction: PerPurpose<Vec<f64>>,
    cache: BTreeMap<(usize, ActivityType), Cumulative>,
}

impl<'a, D: CellDistances> CellChooser<'a, D> {
    fn new(cells: &'a CellTable, distances: &'a D, model: &'a DestinationModel) -> Self {
        CellChooser {
            distances,
            model,
            attraction: PerPurpose::from_fn(|p| cells.attraction(&model.attraction[p])),
            cache: BTreeMap::new(),
        }
    }

    fn choose<R: Rng + ?Sized>(&mut self, origin: usize, purpose: ActivityType, rng: &mut R) -> Result<usize> {
        if !self.cache.contains_key(&(origin, purpose)) {
            let p = crate::choice::destination_probabilities(
                origin,
                purpose,
                &self.attraction[purpose],
                self.distances,
                &self.model.deterrence[purpose],
                purpose == ActivityType::Home,
            )?;
            self.cache.insert((origin, purpose), Cumulative::new(p).unwrap());
        }
        Ok(self.cache[&(origin, purpose)].sample(rng))
    }

    fn home<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        // deterrence switched off: origin is irrelevant
        self.choose(0, ActivityType::Home, rng)
    }
}

/// `n` trips of one purpose with origins drawn uniformly over cells and
/// destinations from the cell-level choice model. Returned as
/// `(origin, destination)` pairs.
pub fn sample_purpose_trips<D: CellDistances>(
    model: &DestinationModel,
    purpose: ActivityType,
    cells: &CellTable,
    distances: &D,
    n: usize,
    seed: u64,
) -> Result<Vec<(u32, u32)>> {
    if cells.is_empty() || distances.n_cells() != cells.len() {
        return Err(Error::arg("distance table does not match the cell table"));
    }
    let mut chooser = CellChooser::new(cells, distances, model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let o = rng.random_range(0..cells.len());
            Ok((o as u32, chooser.choose(o, purpose, &mut rng)? as u32))
        })
        .collect()
}

/// `n` person-days from the forward model with `truth` parameters, recorded
/// at cell resolution. Each day starts at home; work and school cells are
/// drawn from the home cell, other destinations from the previous cell.
pub fn generate_synthetic_survey<D: CellDistances>(
    truth: &CalibrationBundle,
    cells: &CellTable,
    distances: &D,
    n: usize,
    options: &SurveyOptions<'_>,
    seed: u64,
) -> Result<Vec<SurveyDay>> {
    if distances.n_cells() != cells.cells.len() {
        return Err(Error::arg("distance table does not match the cell table"));
    }
    let mut chooser = CellChooser::new(cells, distances, &truth.destination);
    let mut out = Vec::with_capacity(n);
    let mps = SURVEY_SPEED_KMH / 3.6;
    for i in 0..n as u64 {
        let mut rng = agent_rng(seed, streams::SURVEY, i);
        let features = sample_sociodemographics(options.socio, &mut rng);
        let weekday = options
            .weekday
            .unwrap_or_else(|| Weekday::DAYS[rng.random_range(0..7)]);
        let key = ChainKey::new(features, weekday);
        let (chain, _) = truth.chains.sample_chain(key, ActivityType::Home, &mut rng)?;
        let dwell = match truth.dwell.lookup(key, &chain)? {
            Some(m) => sample_dwell_times(m, &mut rng),
            None => Vec::new(),
        };
        let home = chooser.home(&mut rng)?;
        let (mut work, mut school) = (None, None);
        let mut cells_of_day: Vec<u32> = Vec::with_capacity(chain.len());
        let mut times = Vec::with_capacity(chain.len());
        let mut t = 0.0;
        for (k, &a) in chain.0.iter().enumerate() {
            let cell = if k == 0 {
                match a {
                    ActivityType::Home => home,
                    _ => chooser.choose(home, a, &mut rng)?,
                }
            } else {
                let prev = cells_of_day[k - 1] as usize;
                match a {
                    ActivityType::Home => home,
                    ActivityType::Work => match work {
                        Some(c) => c,
                        None => *work.insert(chooser.choose(home, a, &mut rng)?),
                    },
                    ActivityType::School => match school {
                        Some(c) => c,
                        None => *school.insert(chooser.choose(home, a, &mut rng)?),
                    },
                    _ => chooser.choose(prev, a, &mut rng)?,
                }
            };
            if k == 0 {
                times.push((0.0, 0.0));
            } else {
                let depart = t + dwell[k - 1];
                let travel = distances.distance_m(cells_of_day[k - 1] as usize, cell) / mps / 60.0;
                times.push((depart, depart + travel));
                t = depart + travel;
            }
            cells_of_day.push(cell as u32);
        }
        out.push(SurveyDay {
            person_id: i,
            features,
            weekday,
            chain,
            cells: cells_of_day,
            times,
        });
    }
    Ok(out)
}
