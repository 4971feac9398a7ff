use alloc::string::String;

use crate::activity::ActivityType;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("area contains no polygonal geometry")]
    EmptyArea,

    #[error("no buildings found in the model area")]
    EmptyModel,

    #[error("road network contains no drivable ways")]
    EmptyGraph,

    #[error("schema error: {0}")]
    Schema(String),

    /// Every candidate has zero weight, e.g. all of them lie beyond the
    /// deterrence cutoff.
    #[error("degenerate destination choice for {purpose:?} from cell {origin}: {detail}")]
    DegenerateChoice {
        purpose: ActivityType,
        origin: usize,
        detail: String,
    },

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("model load error: {0}")]
    ModelLoad(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
