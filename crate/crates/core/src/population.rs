//! Agents: socio-demographic features, homes and fixed work/school places.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activity::ActivityType;
use crate::building::Building;
use crate::choice::DestinationModel;
use crate::error::{Error, Result};
use crate::stats::Cumulative;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "0-40")]
    Under40,
    #[serde(rename = "40-60")]
    From40To60,
    #[serde(rename = "60-100")]
    Over60,
    #[default]
    #[serde(rename = "undefined")]
    Undefined,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogenousGroup {
    Working,
    NonWorking,
    Student,
    #[default]
    Undefined,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityGroup {
    CarFull,
    CarMixed,
    CarNone,
    #[default]
    Undefined,
}

macro_rules! str_enum {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(<$t>::$v => $s),* }
            }

            /// Parses the wire name; an empty string is `undefined`.
            pub fn parse(s: &str) -> Option<Self> {
                let s = s.trim();
                if s.is_empty() {
                    return Some(<$t>::Undefined);
                }
                match s { $($s => Some(<$t>::$v),)* _ => None }
            }
        }
    };
}

str_enum!(AgeGroup { Under40 => "0-40", From40To60 => "40-60", Over60 => "60-100", Undefined => "undefined" });
str_enum!(HomogenousGroup { Working => "working", NonWorking => "non_working", Student => "student", Undefined => "undefined" });
str_enum!(MobilityGroup { CarFull => "car_full", CarMixed => "car_mixed", CarNone => "car_none", Undefined => "undefined" });

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SocioFeatures {
    pub age: AgeGroup,
    pub homogenous_group: HomogenousGroup,
    pub mobility_group: MobilityGroup,
}

impl SocioFeatures {
    pub const UNDEFINED: SocioFeatures = SocioFeatures {
        age: AgeGroup::Undefined,
        homogenous_group: HomogenousGroup::Undefined,
        mobility_group: MobilityGroup::Undefined,
    };
}

/// One atom of the joint socio-demographic distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocioAtom {
    #[serde(flatten)]
    pub features: SocioFeatures,
    pub probability: f64,
}

/// Joint distribution over feature tuples, given as a list of atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SocioAtom>", into = "Vec<SocioAtom>")]
pub struct SocioDistribution {
    atoms: Vec<SocioAtom>,
    cdf: Cumulative,
}

impl TryFrom<Vec<SocioAtom>> for SocioDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<SocioAtom>) -> Result<Self> {
        SocioDistribution::new(atoms)
    }
}

impl From<SocioDistribution> for Vec<SocioAtom> {
    fn from(d: SocioDistribution) -> Self {
        d.atoms
    }
}

impl SocioDistribution {
    /// Probabilities must be non-negative and sum to 1 within 1e-9.
    pub fn new(atoms: Vec<SocioAtom>) -> Result<Self> {
        if atoms.iter().any(|a| !(a.probability >= 0.0)) {
            return Err(Error::Schema("socio-demographic probabilities must be non-negative".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Schema(format!(
                "socio-demographic distribution sums to {total}, expected 1"
            )));
        }
        let cdf = Cumulative::new(atoms.iter().map(|a| a.probability))
            .ok_or_else(|| Error::Schema("empty socio-demographic distribution".into()))?;
        Ok(SocioDistribution { atoms, cdf })
    }

    pub fn atoms(&self) -> &[SocioAtom] {
        &self.atoms
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SocioFeatures {
        self.atoms[self.cdf.sample(rng)].features
    }
}

/// Draw from `dist`, or all-undefined features when no distribution is given.
pub fn sample_sociodemographics<R: Rng + ?Sized>(dist: Option<&SocioDistribution>, rng: &mut R) -> SocioFeatures {
    match dist {
        Some(d) => d.sample(rng),
        None => SocioFeatures::UNDEFINED,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: u64,
    pub features: SocioFeatures,
    /// Building index.
    pub home: usize,
    /// Assigned on the first work activity, then fixed.
    pub work: Option<usize>,
    /// Assigned on the first school activity, then fixed.
    pub school: Option<usize>,
}

impl Agent {
    pub fn fixed_location(&self, purpose: ActivityType) -> Option<usize> {
        match purpose {
            ActivityType::Home => Some(self.home),
            ActivityType::Work => self.work,
            ActivityType::School => self.school,
            _ => None,
        }
    }

    /// Returns the fixed location for `purpose`, choosing it with `choose`
    /// the first time it is needed.
    pub fn fixed_location_or_insert_with(&mut self, purpose: ActivityType, choose: impl FnOnce(usize) -> Result<usize>) -> Result<usize> {
        let home = self.home;
        let slot = match purpose {
            ActivityType::Home => return Ok(home),
            ActivityType::Work => &mut self.work,
            ActivityType::School => &mut self.school,
            p => return Err(Error::arg(format!("{p} has no fixed location"))),
        };
        if let Some(b) = *slot {
            return Ok(b);
        }
        let b = choose(home)?;
        *slot = Some(b);
        Ok(b)
    }
}

/// How homes are drawn: proportional to census population when any
/// building is populated, otherwise proportional to the home attraction
/// with deterrence switched off.
#[derive(Clone, Debug)]
pub enum HomeSampler {
    Census(Cumulative),
    Attraction(Cumulative),
}

impl HomeSampler {
    pub fn new(buildings: &[Building], model: &DestinationModel) -> Result<Self> {
        if buildings.is_empty() {
            return Err(Error::EmptyModel);
        }
        if let Some(c) = Cumulative::new(buildings.iter().map(|b| b.population)) {
            return Ok(HomeSampler::Census(c));
        }
        let c = Cumulative::new(buildings.iter().map(|b| model.attraction(b, ActivityType::Home)))
            .ok_or(Error::EmptyModel)?;
        Ok(HomeSampler::Attraction(c))
    }

    pub fn uses_census(&self) -> bool {
        matches!(self, HomeSampler::Census(_))
    }

    pub fn probability(&self, building: usize) -> f64 {
        match self {
            HomeSampler::Census(c) | HomeSampler::Attraction(c) => c.probability(building),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            HomeSampler::Census(c) | HomeSampler::Attraction(c) => c.sample(rng),
        }
    }
}

/// Random stream domains, so that population creation and day simulation of
/// one agent never share draws.
pub mod streams {
    pub const POPULATION: u64 = 1;
    pub const SIMULATION: u64 = 2;
    pub const SURVEY: u64 = 3;
}

/// Independent RNG stream for `(seed, domain, agent)`.
pub fn agent_rng(seed: u64, domain: u64, agent: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(agent);
    rng
}

/// One agent with its own stream: features first, then the home.
pub fn create_agent(id: u64, socio: Option<&SocioDistribution>, homes: &HomeSampler, seed: u64) -> Agent {
    let mut rng = agent_rng(seed, streams::POPULATION, id);
    let features = sample_sociodemographics(socio, &mut rng);
    Agent {
        id,
        features,
        home: homes.sample(&mut rng),
        work: None,
        school: None,
    }
}

/// `n` agents, deterministic per seed and independent of evaluation order.
pub fn create_population(n: usize, socio: Option<&SocioDistribution>, homes: &HomeSampler, seed: u64) -> Result<Vec<Agent>> {
    if n == 0 {
        return Err(Error::arg("population size must be at least 1"));
    }
    Ok((0..n as u64).map(|id| create_agent(id, socio, homes, seed)).collect())
}
