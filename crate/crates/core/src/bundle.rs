//! Everything the simulator needs from calibration, as one document.

use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::choice::DestinationModel;
use crate::error::{Error, Result};
use crate::schedule::{ChainTable, DwellTable};

pub const BUNDLE_SCHEMA: &str = "mobgen.bundle/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    pub schema: String,
    #[serde(default)]
    pub description: String,
    pub destination: DestinationModel,
    pub chains: ChainTable,
    pub dwell: DwellTable,
}

impl CalibrationBundle {
    pub fn new(description: impl Into<String>, destination: DestinationModel, chains: ChainTable, dwell: DwellTable) -> Self {
        CalibrationBundle {
            schema: BUNDLE_SCHEMA.into(),
            description: description.into(),
            destination,
            chains,
            dwell,
        }
    }

    /// Schema id, coefficient ranges and the presence of a global chain
    /// distribution.
    pub fn validate(&self) -> Result<()> {
        if self.schema != BUNDLE_SCHEMA {
            return Err(Error::ModelLoad(alloc::format!(
                "unsupported bundle schema {:?}, expected {BUNDLE_SCHEMA:?}",
                self.schema
            )));
        }
        self.destination.validate()?;
        self.chains.validate()
    }
}
