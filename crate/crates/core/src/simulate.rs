//! Forward model: agents, days, chains, dwell times and destinations.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::activity::{ActivityType, PerPurpose, Weekday};
use crate::building::Building;
use crate::bundle::CalibrationBundle;
use crate::choice::{destination_probabilities, CellDistances};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::population::{agent_rng, create_agent, streams, Agent, HomeSampler, SocioDistribution};
use crate::schedule::{sample_dwell_times, Activity, ChainKey, ChainSource, DayPlan};

/// Immutable model state shared by all agents.
pub struct Scenario<'a, D> {
    pub buildings: &'a [Building],
    /// Must carry attractions computed with `bundle.destination`.
    pub grid: &'a Grid,
    pub distances: D,
    pub bundle: &'a CalibrationBundle,
    pub homes: HomeSampler,
    log_attraction: PerPurpose<Vec<f64>>,
}

impl<'a, D: CellDistances> Scenario<'a, D> {
    pub fn new(buildings: &'a [Building], grid: &'a Grid, distances: D, bundle: &'a CalibrationBundle) -> Result<Self> {
        if distances.n_cells() != grid.len() {
            return Err(Error::Schema(alloc::format!(
                "distance matrix covers {} cells, grid has {}",
                distances.n_cells(),
                grid.len()
            )));
        }
        bundle.validate()?;
        let homes = HomeSampler::new(buildings, &bundle.destination)?;
        let log_attraction = PerPurpose::from_fn(|p| grid.cell_attraction(p).iter().map(|a| a.ln()).collect());
        Ok(Scenario {
            buildings,
            grid,
            distances,
            bundle,
            homes,
            log_attraction,
        })
    }

    /// Exact stage-one distribution over cells for a trip from `origin_cell`.
    pub fn cell_probabilities(&self, origin_cell: usize, purpose: ActivityType) -> Result<Vec<f64>> {
        destination_probabilities(
            origin_cell,
            purpose,
            self.grid.cell_attraction(purpose),
            &self.distances,
            &self.bundle.destination.deterrence[purpose],
            purpose == ActivityType::Home,
        )
    }

    /// Two-stage destination draw: a cell from the MNL over cell aggregates,
    /// then a member building proportional to its attraction.
    pub fn choose_destination<R: Rng + ?Sized>(&self, origin_cell: usize, purpose: ActivityType, rng: &mut R) -> Result<usize> {
        let det = &self.bundle.destination.deterrence[purpose];
        let flat = purpose == ActivityType::Home;
        let la = &self.log_attraction[purpose];
        let mut v: Vec<f64> = (0..la.len())
            .map(|c| {
                if flat {
                    la[c]
                } else {
                    la[c] + det.log_f(self.distances.distance_m(origin_cell, c) / 1000.0)
                }
            })
            .collect();
        let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::DegenerateChoice {
                purpose,
                origin: origin_cell,
                detail: "every cell lies beyond the deterrence cutoff".into(),
            });
        }
        let mut total = 0.0;
        for x in v.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut cell = v.len() - 1;
        for (c, w) in v.iter().enumerate() {
            acc += w;
            if acc > target && *w > 0.0 {
                cell = c;
                break;
            }
        }
        while v[cell] == 0.0 {
            cell -= 1;
        }
        Ok(self.grid.sample_member(cell, purpose, rng))
    }

    pub fn create_agent(&self, id: u64, socio: Option<&SocioDistribution>, seed: u64) -> Agent {
        create_agent(id, socio, &self.homes, seed)
    }

    /// One day for `agent`. The first activity continues where the previous
    /// day ended (`prev`: activity and building).
    pub fn generate_day<R: Rng + ?Sized>(
        &self,
        agent: &mut Agent,
        weekday: Weekday,
        prev: (ActivityType, usize),
        rng: &mut R,
    ) -> Result<(DayPlan, ChainSource)> {
        let key = ChainKey::new(agent.features, weekday);
        let (chain, source) = self.bundle.chains.sample_chain(key, prev.0, rng)?;
        let dwell = match self.bundle.dwell.lookup(key, &chain)? {
            Some(m) => sample_dwell_times(m, rng),
            None => Vec::new(),
        };
        let mut activities = Vec::with_capacity(chain.len());
        let mut here = prev.1;
        for (i, &kind) in chain.0.iter().enumerate() {
            let building = if i == 0 {
                prev.1
            } else {
                match kind {
                    ActivityType::Home => agent.home,
                    ActivityType::Work | ActivityType::School => agent.fixed_location_or_insert_with(kind, |home| {
                        self.choose_destination(self.grid.cell_of(home), kind, rng)
                    })?,
                    _ => self.choose_destination(self.grid.cell_of(here), kind, rng)?,
                }
            };
            here = building;
            activities.push(Activity {
                kind,
                stay_minutes: dwell.get(i).copied(),
                building,
            });
        }
        Ok((DayPlan { weekday, activities }, source))
    }

    /// `days` consecutive days, the first starting at home on `start`.
    pub fn simulate_agent(&self, mut agent: Agent, days: usize, start: Weekday, seed: u64) -> Result<AgentSchedule> {
        let mut rng = agent_rng(seed, streams::SIMULATION, agent.id);
        let mut prev = (ActivityType::Home, agent.home);
        let mut weekday = start;
        let mut out = Vec::with_capacity(days);
        let mut fallbacks = 0;
        for _ in 0..days {
            let (day, src) = self.generate_day(&mut agent, weekday, prev, &mut rng)?;
            if src == ChainSource::SingleActivity {
                fallbacks += 1;
            }
            let last = day.last();
            prev = (last.kind, last.building);
            out.push(day);
            weekday = weekday.next();
        }
        Ok(AgentSchedule {
            agent,
            days: out,
            single_activity_fallbacks: fallbacks,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSchedule {
    pub agent: Agent,
    pub days: Vec<DayPlan>,
    /// Days for which no chain started with the previous day's last activity.
    pub single_activity_fallbacks: u32,
}
