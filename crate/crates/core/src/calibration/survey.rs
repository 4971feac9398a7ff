//! Trip-diary survey records at cell resolution.
//!
//! One person-day is a run of records sharing `person_id`, ordered by
//! `trip_index`. Record 0 describes the activity the day starts with (origin
//! and destination are its cell, times are usually 0). Record `k ≥ 1` is the
//! trip to activity `k`: `purpose` is that activity, `start_min`/`end_min`
//! are departure and arrival in minutes after midnight. The dwell time of
//! activity `k` is the departure of trip `k + 1` minus the arrival of trip
//! `k`; the last activity is open-ended.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activity::{ActivityType, Weekday};
use crate::error::{Error, Result};
use crate::population::SocioFeatures;
use crate::schedule::Chain;

/// Survey columns in file order.
pub const SURVEY_COLUMNS: [&str; 11] = [
    "person_id",
    "age",
    "hom_group",
    "mob_group",
    "weekday",
    "trip_index",
    "purpose",
    "origin_cell",
    "dest_cell",
    "start_min",
    "end_min",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurveyRecord {
    pub person_id: u64,
    pub features: SocioFeatures,
    pub weekday: Weekday,
    pub trip_index: u32,
    pub purpose: ActivityType,
    pub origin_cell: u32,
    pub dest_cell: u32,
    pub start_min: f64,
    pub end_min: f64,
}

/// One trip with its day context.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurveyTrip {
    pub purpose: ActivityType,
    pub origin: u32,
    pub destination: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurveyDay {
    pub person_id: u64,
    pub features: SocioFeatures,
    pub weekday: Weekday,
    pub chain: Chain,
    /// Cell of each activity.
    pub cells: Vec<u32>,
    /// `(departure, arrival)` minutes for each record; record 0 is the start.
    pub times: Vec<(f64, f64)>,
}

impl SurveyDay {
    pub fn trips(&self) -> impl Iterator<Item = SurveyTrip> + '_ {
        (1..self.cells.len()).map(move |k| SurveyTrip {
            purpose: self.chain.0[k],
            origin: self.cells[k - 1],
            destination: self.cells[k],
        })
    }

    /// Dwell times of the non-final activities, hours.
    pub fn dwell_hours(&self) -> Vec<f64> {
        (0..self.cells.len().saturating_sub(1))
            .map(|k| (self.times[k + 1].0 - self.times[k].1) / 60.0)
            .collect()
    }

    pub fn to_records(&self) -> Vec<SurveyRecord> {
        (0..self.cells.len())
            .map(|k| SurveyRecord {
                person_id: self.person_id,
                features: self.features,
                weekday: self.weekday,
                trip_index: k as u32,
                purpose: self.chain.0[k],
                origin_cell: if k == 0 { self.cells[0] } else { self.cells[k - 1] },
                dest_cell: self.cells[k],
                start_min: self.times[k].0,
                end_min: self.times[k].1,
            })
            .collect()
    }
}

/// Groups records into person-days. Each day must have contiguous trip
/// indices from 0, consistent features, chained cells and non-negative
/// dwell times. `n_cells` bounds the cell ids.
pub fn assemble_days(records: &[SurveyRecord], n_cells: usize) -> Result<Vec<SurveyDay>> {
    let mut by_person: BTreeMap<u64, Vec<&SurveyRecord>> = BTreeMap::new();
    for r in records {
        by_person.entry(r.person_id).or_default().push(r);
    }
    let mut days = Vec::with_capacity(by_person.len());
    for (pid, mut rows) in by_person {
        rows.sort_by_key(|r| r.trip_index);
        let first = rows[0];
        let mut cells = Vec::with_capacity(rows.len());
        let mut times = Vec::with_capacity(rows.len());
        let mut chain = Vec::with_capacity(rows.len());
        for (k, r) in rows.iter().enumerate() {
            let bad = |what: &str| Error::Schema(format!("person {pid}, trip {}: {what}", r.trip_index));
            if r.trip_index as usize != k {
                return Err(bad("trip indices must run 0, 1, 2, ... without gaps"));
            }
            if r.features != first.features || r.weekday != first.weekday {
                return Err(bad("socio-demographic features or weekday change within a day"));
            }
            if r.origin_cell as usize >= n_cells || r.dest_cell as usize >= n_cells {
                return Err(bad("cell id outside the cell table"));
            }
            if k > 0 && r.origin_cell != rows[k - 1].dest_cell {
                return Err(bad("trip does not start where the previous one ended"));
            }
            if !(r.end_min >= r.start_min) {
                return Err(bad("arrival before departure"));
            }
            if k > 0 && r.start_min < rows[k - 1].end_min {
                return Err(bad("departure before the previous arrival"));
            }
            cells.push(r.dest_cell);
            times.push((r.start_min, r.end_min));
            chain.push(r.purpose);
        }
        days.push(SurveyDay {
            person_id: pid,
            features: first.features,
            weekday: first.weekday,
            chain: Chain(chain),
            cells,
            times,
        });
    }
    Ok(days)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(pid: u64, k: u32, p: ActivityType, o: u32, d: u32, s: f64, e: f64) -> SurveyRecord {
        SurveyRecord {
            person_id: pid,
            features: SocioFeatures::UNDEFINED,
            weekday: Weekday::Mo,
            trip_index: k,
            purpose: p,
            origin_cell: o,
            dest_cell: d,
            start_min: s,
            end_min: e,
        }
    }

    #[test]
    fn assembles_and_round_trips() {
        let rows = [
            rec(7, 2, ActivityType::Home, 4, 1, 1000.0, 1020.0),
            rec(7, 0, ActivityType::Home, 1, 1, 0.0, 0.0),
            rec(7, 1, ActivityType::Work, 1, 4, 480.0, 500.0),
        ];
        let days = assemble_days(&rows, 5).unwrap();
        assert_eq!(days.len(), 1);
        let d = &days[0];
        assert_eq!(alloc::format!("{}", d.chain), "HWH");
        assert_eq!(d.dwell_hours(), alloc::vec![8.0, 500.0 / 60.0]);
        let trips: Vec<SurveyTrip> = d.trips().collect();
        assert_eq!(trips[0].destination, 4);
        assert_eq!(trips[1].origin, 4);
        let mut back = d.to_records();
        back.sort_by_key(|r| r.trip_index);
        let mut orig = rows.to_vec();
        orig.sort_by_key(|r| r.trip_index);
        assert_eq!(back, orig);
    }

    #[test]
    fn rejects_gaps_and_broken_chains() {
        let gap = [rec(1, 0, ActivityType::Home, 0, 0, 0.0, 0.0), rec(1, 2, ActivityType::Work, 0, 1, 1.0, 2.0)];
        assert!(assemble_days(&gap, 2).is_err());
        let broken = [rec(1, 0, ActivityType::Home, 0, 0, 0.0, 0.0), rec(1, 1, ActivityType::Work, 1, 1, 1.0, 2.0)];
        assert!(assemble_days(&broken, 2).is_err());
    }
}
