//! OSM ingestion, file formats, artifact cache and stage orchestration for
//! the mobility-demand generator. The algorithms live in `mobgen-core`.

pub mod cache;
pub mod error;
pub mod formats;
pub mod ingest;
pub mod osm;
pub mod pipeline;

pub use error::{Error, Result};

/// Parameter bundle used when no `--bundle` is given.
pub const DEFAULT_BUNDLE_JSON: &str = include_str!("../data/default_bundle.json");

pub fn default_bundle() -> Result<mobgen_core::CalibrationBundle> {
    formats::parse_bundle(DEFAULT_BUNDLE_JSON)
}
