use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("invalid instance {id:?}: {message}")]
    InvalidInstance { id: String, message: String },

    #[error("embedding store: {0}")]
    Embedding(String),

    #[error("embedding store: unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("embedding store: length mismatch: {0}")]
    LengthMismatch(String),

    #[error("embedding store: record {id:?} has {what} norm {norm:.6}, outside 1 +/- {tol}")]
    NormViolation {
        id: String,
        what: String,
        norm: f64,
        tol: f64,
    },

    #[error("invalid parse for {id:?}: {message}")]
    InvalidParse { id: String, message: String },

    #[error("unknown id {0:?}")]
    UnknownId(String),

    #[error("missing {what} for id {id:?}")]
    MissingResource { what: &'static str, id: String },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("term scheme mismatch: {0} vs {1}")]
    SchemeMismatch(String, String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("metric {0} has no per-aspect decomposition; use bsr for set selection")]
    UnsupportedMetric(String),

    #[error("prompt: {0}")]
    Prompt(String),
}

impl Error {
    /// True for errors caused by a bad argument or configuration rather than
    /// by the data being processed.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_) | Error::UnsupportedMetric(_) | Error::SchemeMismatch(..)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
