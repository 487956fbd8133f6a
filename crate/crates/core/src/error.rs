use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient extrema: {found} found, {needed} needed")]
    InsufficientExtrema { found: usize, needed: usize },

    #[error("insufficient frames in {dir}: found {found}, need {needed}")]
    InsufficientFrames {
        dir: PathBuf,
        found: usize,
        needed: usize,
    },

    #[error("failed to decode frame {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
