use std::path::PathBuf;

use iclcover::corpus::ValidationReport;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] iclcover::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("bundle does not validate:\n{0}")]
    Validation(ValidationReport),
    #[error("runs were made on different test splits: {first} and {other}")]
    SplitMismatch { first: PathBuf, other: PathBuf },
    #[error("{path} line {line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
    #[error("request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed response from {endpoint}: {message}")]
    Response { endpoint: String, message: String },
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if e.is_config_error() => 2,
            HarnessError::ConfigFile { .. } | HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
