//! Core algorithms of the mobility-demand generator.
//!
//! The crate turns a table of buildings into per-agent daily activity
//! schedules and carries everything needed to calibrate and validate that
//! process:
//!
//! * [`geo`]: WGS84 points, haversine distances, a local equal-area projection
//!   and the planar polygon predicates the rest of the crate needs.
//! * [`building`] / [`choice`]: the linear attraction function, the four
//!   deterrence forms and the multinomial-logit destination choice.
//! * [`grid`]: bisecting k-means cells used for two-stage destination sampling.
//! * [`routing`]: road graph, bounded Dijkstra sweeps and the cell distance matrix.
//! * [`population`] / [`schedule`] / [`simulate`]: agents, activity chains,
//!   dwell times and the day-by-day forward model.
//! * [`calibration`]: maximum-likelihood fits, chain tables, Gaussian mixtures and
//!   a synthetic survey generator.
//! * [`validation`]: zonal, OD, distance and temporal comparison metrics.
//!
//! Everything here is `no_std` + `alloc`; file formats, OSM parsing and the
//! command line live in the `mobgen` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod activity;
pub mod building;
pub mod bundle;
pub mod calibration;
pub mod choice;
pub mod error;
pub mod geo;
pub mod gmm;
pub mod grid;
mod kdtree;
pub mod linalg;
pub mod optimize;
pub mod population;
pub mod routing;
pub mod schedule;
pub mod simulate;
pub mod stats;
pub mod validation;

pub use activity::{ActivityType, PerPurpose, Weekday};
pub use building::{Building, Landuse};
pub use bundle::CalibrationBundle;
pub use choice::{DestinationModel, DeterrenceForm, DeterrenceParams};
pub use error::{Error, Result};
pub use geo::{AreaGeometry, LonLat};
pub use grid::{Grid, GridCell};
pub use population::{Agent, SocioFeatures};
pub use routing::{DistanceMatrix, RoadGraph};
pub use schedule::{ChainDistribution, DayPlan, DwellMixture};
