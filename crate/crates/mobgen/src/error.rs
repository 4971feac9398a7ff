use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}parse error: {reason}", file_prefix(.path))]
    Parse { path: Option<PathBuf>, reason: String },
    #[error("{}{source}", file_prefix(.path))]
    Model {
        path: Option<PathBuf>,
        #[source]
        source: mobgen_core::Error,
    },
}

fn file_prefix(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(reason: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            reason: reason.into(),
        }
    }

    pub fn in_file(self, file: &Path) -> Self {
        match self {
            Error::Parse { path: None, reason } => Error::Parse {
                path: Some(file.to_path_buf()),
                reason,
            },
            Error::Model { path: None, source } => Error::Model {
                path: Some(file.to_path_buf()),
                source,
            },
            e => e,
        }
    }

    /// The underlying model error, if any.
    pub fn model(&self) -> Option<&mobgen_core::Error> {
        match self {
            Error::Model { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<mobgen_core::Error> for Error {
    fn from(source: mobgen_core::Error) -> Self {
        Error::Model { path: None, source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
