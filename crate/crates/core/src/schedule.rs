//! Activity chains and dwell times.
//!
//! Chains come from empirical distributions keyed by socio-demographic
//! features and weekday. A key with fewer than [`MIN_SAMPLES`] observations
//! is relaxed in the fixed order age → mobility group → homogenous group →
//! weekday. Dwell times are drawn jointly from a Gaussian mixture over the
//! non-final activities of the chain.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::activity::{ActivityType, Weekday};
use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::population::{AgeGroup, HomogenousGroup, MobilityGroup, SocioFeatures};
use crate::stats::Cumulative;

/// Minimum number of observations behind a chain or a distribution.
pub const MIN_SAMPLES: u32 = 30;
pub const MINUTES_PER_DAY: f64 = 1440.0;
/// Redraws of a dwell vector with negative entries before clamping.
pub const MAX_DWELL_REDRAWS: usize = 100;

/// Ordered activities of one day, written as activity codes (`"HWH"`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Chain(pub Vec<ActivityType>);

impl Chain {
    pub fn parse(s: &str) -> Result<Chain> {
        let acts: Option<Vec<ActivityType>> = s
            .chars()
            .map(|c| ActivityType::ALL.into_iter().find(|a| a.code() == c))
            .collect();
        match acts {
            Some(a) if !a.is_empty() => Ok(Chain(a)),
            _ => Err(Error::Schema(alloc::format!("invalid activity chain {s:?}"))),
        }
    }

    pub fn single(a: ActivityType) -> Chain {
        Chain(vec![a])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> ActivityType {
        self.0[0]
    }

    pub fn last(&self) -> ActivityType {
        self.0[self.0.len() - 1]
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{}", a.code())?;
        }
        Ok(())
    }
}

impl Serialize for Chain {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Chain {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Chain::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Feature tuple plus weekday; `Undefined` fields match every value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChainKey {
    #[serde(flatten)]
    pub features: SocioFeatures,
    pub weekday: Weekday,
}

impl ChainKey {
    pub const GLOBAL: ChainKey = ChainKey {
        features: SocioFeatures::UNDEFINED,
        weekday: Weekday::Undefined,
    };

    pub fn new(features: SocioFeatures, weekday: Weekday) -> Self {
        ChainKey { features, weekday }
    }

    /// The key followed by its successive relaxations (age, then mobility
    /// group, then homogenous group, then weekday set to undefined), without
    /// repeats. Always ends with [`ChainKey::GLOBAL`].
    pub fn cascade(self) -> Vec<ChainKey> {
        let mut k = self;
        let mut out = vec![k];
        let steps: [fn(&mut ChainKey); 4] = [
            |k| k.features.age = AgeGroup::Undefined,
            |k| k.features.mobility_group = MobilityGroup::Undefined,
            |k| k.features.homogenous_group = HomogenousGroup::Undefined,
            |k| k.weekday = Weekday::Undefined,
        ];
        for step in steps {
            step(&mut k);
            if *out.last().unwrap() != k {
                out.push(k);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedChain {
    pub chain: Chain,
    pub probability: f64,
}

/// Empirical chain distribution of one key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainDistribution {
    #[serde(flatten)]
    pub key: ChainKey,
    pub chains: Vec<WeightedChain>,
    /// Observations behind the retained chains.
    pub sample_count: u32,
}

impl ChainDistribution {
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.chains.iter().map(|c| c.probability).sum();
        if self.chains.is_empty() || (total - 1.0).abs() > 1e-9 || self.chains.iter().any(|c| !(c.probability >= 0.0)) {
            return Err(Error::Schema(alloc::format!(
                "chain probabilities for {:?} must be non-negative and sum to 1 (got {total})",
                self.key
            )));
        }
        Ok(())
    }

    /// Probability mass per chain length.
    pub fn length_totals(&self) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for c in &self.chains {
            *m.entry(c.chain.len()).or_insert(0.0) += c.probability;
        }
        m
    }

    /// Draw restricted to chains starting with `first`; `None` if there is
    /// no such chain.
    pub fn sample_starting_with<R: Rng + ?Sized>(&self, first: ActivityType, rng: &mut R) -> Option<&Chain> {
        let cdf = Cumulative::new(
            self.chains
                .iter()
                .map(|c| if c.chain.first() == first { c.probability } else { 0.0 }),
        )?;
        Some(&self.chains[cdf.sample(rng)].chain)
    }
}

/// Outcome of a length recalibration.
#[derive(Clone, Debug, PartialEq)]
pub struct Recalibrated {
    pub distribution: ChainDistribution,
    /// Lengths that had marginal mass but no surviving chain; their mass was
    /// spread proportionally over the remaining lengths.
    pub orphaned_lengths: Vec<usize>,
}

/// Rescales length groups to `marginals` while keeping ratios within a group.
pub fn recalibrate_chain_lengths(dist: &ChainDistribution, marginals: &BTreeMap<usize, f64>) -> Result<Recalibrated> {
    let groups = dist.length_totals();
    let mut orphaned = Vec::new();
    let mut orphan_mass = 0.0;
    for (&len, &m) in marginals {
        if m > 0.0 && groups.get(&len).copied().unwrap_or(0.0) <= 0.0 {
            orphaned.push(len);
            orphan_mass += m;
        }
    }
    let surviving: f64 = marginals
        .iter()
        .filter(|(l, _)| groups.get(l).copied().unwrap_or(0.0) > 0.0)
        .map(|(_, m)| m)
        .sum();
    if !(surviving > 0.0) {
        return Err(Error::arg("no chain length with both marginal mass and surviving chains"));
    }
    if !orphaned.is_empty() {
        log::warn!(
            "chain lengths {:?} of {:?} have no chain with enough samples; {:.4} of the mass was reassigned",
            orphaned,
            dist.key,
            orphan_mass
        );
    }
    let mut chains: Vec<WeightedChain> = dist
        .chains
        .iter()
        .filter_map(|c| {
            let len = c.chain.len();
            let target = marginals.get(&len).copied().unwrap_or(0.0) / surviving;
            let p = c.probability / groups[&len] * target;
            (p > 0.0).then(|| WeightedChain {
                chain: c.chain.clone(),
                probability: p,
            })
        })
        .collect();
    let total: f64 = chains.iter().map(|c| c.probability).sum();
    chains.iter_mut().for_each(|c| c.probability /= total);
    Ok(Recalibrated {
        distribution: ChainDistribution {
            key: dist.key,
            chains,
            sample_count: dist.sample_count,
        },
        orphaned_lengths: orphaned,
    })
}

/// Chain distributions by key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ChainDistribution>", into = "Vec<ChainDistribution>")]
pub struct ChainTable {
    map: BTreeMap<ChainKey, ChainDistribution>,
}

impl TryFrom<Vec<ChainDistribution>> for ChainTable {
    type Error = Error;

    fn try_from(v: Vec<ChainDistribution>) -> Result<Self> {
        let mut t = ChainTable::default();
        for d in v {
            d.validate()?;
            if t.map.insert(d.key, d).is_some() {
                return Err(Error::Schema("duplicate chain distribution key".into()));
            }
        }
        Ok(t)
    }
}

impl From<ChainTable> for Vec<ChainDistribution> {
    fn from(t: ChainTable) -> Self {
        t.map.into_values().collect()
    }
}

/// Where a sampled chain came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainSource {
    /// Drawn from the distribution of this key.
    Table(ChainKey),
    /// No distribution offered a chain starting with the required activity.
    SingleActivity,
}

impl ChainTable {
    pub fn insert(&mut self, d: ChainDistribution) {
        self.map.insert(d.key, d);
    }

    pub fn get(&self, key: &ChainKey) -> Option<&ChainDistribution> {
        self.map.get(key)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ChainDistribution> {
        self.map.values()
    }

    pub fn validate(&self) -> Result<()> {
        match self.map.get(&ChainKey::GLOBAL) {
            Some(d) if d.sample_count >= MIN_SAMPLES => Ok(()),
            _ => Err(Error::ModelLoad(
                "chain table lacks a fully undefined distribution with enough samples".into(),
            )),
        }
    }

    /// Position in the cascade of `key` of the first distribution with at
    /// least [`MIN_SAMPLES`] observations.
    fn first_usable(&self, cascade: &[ChainKey]) -> Option<usize> {
        cascade
            .iter()
            .position(|k| self.map.get(k).is_some_and(|d| d.sample_count >= MIN_SAMPLES))
    }

    pub fn select(&self, key: ChainKey) -> Result<&ChainDistribution> {
        let cascade = key.cascade();
        let i = self
            .first_usable(&cascade)
            .ok_or_else(|| Error::ModelLoad("no chain distribution with enough samples".into()))?;
        Ok(&self.map[&cascade[i]])
    }

    /// Chain for a day that must start with `prev_last`. Falls back along the
    /// cascade when the selected distribution has no matching chain and to
    /// the single-activity chain `[prev_last]` as a last resort.
    pub fn sample_chain<R: Rng + ?Sized>(&self, key: ChainKey, prev_last: ActivityType, rng: &mut R) -> Result<(Chain, ChainSource)> {
        let cascade = key.cascade();
        let start = self
            .first_usable(&cascade)
            .ok_or_else(|| Error::ModelLoad("no chain distribution with enough samples".into()))?;
        for k in &cascade[start..] {
            let Some(d) = self.map.get(k).filter(|d| d.sample_count >= MIN_SAMPLES) else {
                continue;
            };
            if let Some(c) = d.sample_starting_with(prev_last, rng) {
                return Ok((c.clone(), ChainSource::Table(*k)));
            }
        }
        log::debug!("no chain starts with {prev_last} for {key:?}; staying put all day");
        Ok((Chain::single(prev_last), ChainSource::SingleActivity))
    }
}

/// Dwell-time mixture of one (key, chain); dimension is chain length − 1,
/// values in hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellMixture {
    #[serde(flatten)]
    pub key: ChainKey,
    pub chain: Chain,
    pub mixture: GaussianMixture,
}

impl DwellMixture {
    pub fn validate(&self) -> Result<()> {
        if self.mixture.dim() + 1 != self.chain.len() {
            return Err(Error::ModelLoad(alloc::format!(
                "dwell mixture for chain {} has dimension {}, expected {}",
                self.chain,
                self.mixture.dim(),
                self.chain.len() - 1
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DwellMixture>", into = "Vec<DwellMixture>")]
pub struct DwellTable {
    map: BTreeMap<(ChainKey, Chain), GaussianMixture>,
}

impl TryFrom<Vec<DwellMixture>> for DwellTable {
    type Error = Error;

    fn try_from(v: Vec<DwellMixture>) -> Result<Self> {
        let mut t = DwellTable::default();
        for m in v {
            m.validate()?;
            t.map.insert((m.key, m.chain), m.mixture);
        }
        Ok(t)
    }
}

impl From<DwellTable> for Vec<DwellMixture> {
    fn from(t: DwellTable) -> Self {
        t.map
            .into_iter()
            .map(|((key, chain), mixture)| DwellMixture { key, chain, mixture })
            .collect()
    }
}

impl DwellTable {
    pub fn insert(&mut self, m: DwellMixture) -> Result<()> {
        m.validate()?;
        self.map.insert((m.key, m.chain), m.mixture);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ChainKey, &Chain, &GaussianMixture)> {
        self.map.iter().map(|((k, c), m)| (k, c, m))
    }

    /// Mixture for `chain`, looked up along the same cascade as the chain
    /// distributions. Single-activity chains need none.
    pub fn lookup(&self, key: ChainKey, chain: &Chain) -> Result<Option<&GaussianMixture>> {
        if chain.len() <= 1 {
            return Ok(None);
        }
        for k in key.cascade() {
            if let Some(m) = self.map.get(&(k, chain.clone())) {
                return Ok(Some(m));
            }
        }
        Err(Error::ModelLoad(alloc::format!(
            "no dwell-time mixture for chain {chain} under {key:?} or its relaxations"
        )))
    }
}

/// Non-final dwell times in minutes. Vectors with negative entries are
/// redrawn up to [`MAX_DWELL_REDRAWS`] times, then clamped at zero; the
/// running total is truncated at midnight so later activities may get zero.
pub fn sample_dwell_times<R: Rng + ?Sized>(mixture: &GaussianMixture, rng: &mut R) -> Vec<f64> {
    if mixture.dim() == 0 {
        return Vec::new();
    }
    let mut x = mixture.sample(rng);
    for _ in 0..MAX_DWELL_REDRAWS {
        if x.iter().all(|v| *v >= 0.0) {
            break;
        }
        x = mixture.sample(rng);
    }
    let mut used = 0.0;
    x.into_iter()
        .map(|h| {
            let m = (h.max(0.0) * 60.0).min(MINUTES_PER_DAY - used);
            used += m;
            m
        })
        .collect()
}

/// One scheduled activity. `stay_minutes` is `None` for the final activity
/// of a day, which lasts until midnight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub kind: ActivityType,
    pub stay_minutes: Option<f64>,
    /// Building index.
    pub building: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayPlan {
    pub weekday: Weekday,
    pub activities: Vec<Activity>,
}

impl DayPlan {
    pub fn last(&self) -> &Activity {
        self.activities.last().expect("a day has at least one activity")
    }

    /// Checks the day invariants: non-negative dwell, at most a day of
    /// non-final dwell, open final activity.
    pub fn check(&self) -> bool {
        let n = self.activities.len();
        if n == 0 || self.activities[n - 1].stay_minutes.is_some() {
            return false;
        }
        let mut total = 0.0;
        for a in &self.activities[..n - 1] {
            match a.stay_minutes {
                Some(m) if m >= 0.0 => total += m,
                _ => return false,
            }
        }
        total <= MINUTES_PER_DAY + 1e-9
    }
}
