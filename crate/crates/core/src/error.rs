use std::path::PathBuf;

use thiserror::Error;

/// Every failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("column `{0}` declared in schema is missing from the header")]
    MissingColumn(String),

    #[error("no usable rows ({dropped} dropped)")]
    NoUsableRows { dropped: usize },

    #[error("column `{column}`: level `{level}` is not one of the declared levels")]
    UnseenLevel { column: String, level: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation requires {expected} targets")]
    WrongTask { expected: &'static str },

    #[error("training diverged at epoch {epoch}: non-finite {what}")]
    NonFinite { epoch: usize, what: &'static str },

    #[error("malformed {format}: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("dataset verification failed: {0}")]
    Verification(String),

    #[error("download failed for {url}: {reason}")]
    Download { url: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
