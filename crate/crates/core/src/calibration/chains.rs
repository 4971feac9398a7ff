//! Empirical chain tables and dwell-time mixtures from survey days.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::survey::SurveyDay;
use crate::error::Result;
use crate::gmm::select_by_bic;
use crate::schedule::{
    recalibrate_chain_lengths, Chain, ChainDistribution, ChainKey, ChainTable, DwellMixture, DwellTable, WeightedChain,
    MIN_SAMPLES,
};

/// Chain tables plus what was needed to build them.
#[derive(Clone, Debug, Default)]
pub struct ChainTables {
    pub table: ChainTable,
    /// Chain-length shares per key before thin chains were dropped.
    pub length_marginals: BTreeMap<ChainKey, BTreeMap<usize, f64>>,
    /// Keys whose marginals contained lengths without any retained chain.
    pub orphaned: BTreeMap<ChainKey, Vec<usize>>,
}

/// Keys a day contributes to: its own key and every relaxation of it.
fn keys_of(day: &SurveyDay) -> Vec<ChainKey> {
    ChainKey::new(day.features, day.weekday).cascade()
}

/// Chain frequencies per key. Chains observed fewer than [`MIN_SAMPLES`]
/// times are dropped, then length groups are rescaled to the pre-drop
/// length shares. Keys left with no chain are omitted.
pub fn build_chain_tables(days: &[SurveyDay]) -> Result<ChainTables> {
    let mut counts: BTreeMap<ChainKey, BTreeMap<&Chain, u32>> = BTreeMap::new();
    for d in days {
        for k in keys_of(d) {
            *counts.entry(k).or_default().entry(&d.chain).or_insert(0) += 1;
        }
    }
    let mut out = ChainTables::default();
    for (key, chains) in counts {
        let total: u32 = chains.values().sum();
        let mut marginals: BTreeMap<usize, f64> = BTreeMap::new();
        for (c, &n) in &chains {
            *marginals.entry(c.len()).or_insert(0.0) += n as f64 / total as f64;
        }
        let kept: Vec<(&Chain, u32)> = chains.iter().filter(|(_, &n)| n >= MIN_SAMPLES).map(|(c, &n)| (*c, n)).collect();
        let kept_total: u32 = kept.iter().map(|k| k.1).sum();
        out.length_marginals.insert(key, marginals.clone());
        if kept.is_empty() {
            continue;
        }
        let raw = ChainDistribution {
            key,
            chains: kept
                .iter()
                .map(|(c, n)| WeightedChain {
                    chain: (*c).clone(),
                    probability: *n as f64 / kept_total as f64,
                })
                .collect(),
            sample_count: kept_total,
        };
        let r = recalibrate_chain_lengths(&raw, &marginals)?;
        if !r.orphaned_lengths.is_empty() {
            out.orphaned.insert(key, r.orphaned_lengths);
        }
        out.table.insert(r.distribution);
    }
    Ok(out)
}

/// Upper bound on mixture components tried per (key, chain).
pub const MAX_COMPONENTS: usize = 6;

/// One mixture per (key, chain) of the table with at least two activities,
/// fitted to the dwell vectors of the days behind it. Components are added
/// while BIC decreases.
pub fn fit_dwell_mixtures(days: &[SurveyDay], table: &ChainTable, max_components: usize, seed: u64) -> Result<DwellTable> {
    let wanted: BTreeSet<(ChainKey, &Chain)> = table
        .iter()
        .flat_map(|d| d.chains.iter().filter(|c| c.chain.len() > 1).map(move |c| (d.key, &c.chain)))
        .collect();
    let mut data: BTreeMap<(ChainKey, &Chain), Vec<Vec<f64>>> = BTreeMap::new();
    for d in days {
        for k in keys_of(d) {
            if wanted.contains(&(k, &d.chain)) {
                data.entry((k, &d.chain)).or_default().push(d.dwell_hours());
            }
        }
    }
    let mut out = DwellTable::default();
    for (i, ((key, chain), x)) in data.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let sel = select_by_bic(&x, max_components, &mut rng)?;
        out.insert(DwellMixture {
            key,
            chain: chain.clone(),
            mixture: sel.mixture,
        })?;
    }
    Ok(out)
}
