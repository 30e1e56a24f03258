use std::path::PathBuf;

use thiserror::Error;

use crate::tensor_store::FormatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Parse {
        path: PathBuf,
        #[source]
        source: FormatError,
    },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A unit whose vectors are too short to define an angle or a basis.
    #[error("unit `{unit}` is degenerate: {detail}")]
    Degenerate { unit: String, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scorer failed on model #{index} ({digest}): {message}")]
    Scorer {
        index: usize,
        digest: String,
        message: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
