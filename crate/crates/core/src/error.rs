use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("no usable rows in {path} ({rejected} rejected)")]
    EmptyInput { path: PathBuf, rejected: usize },

    #[error("malformed row {row} in {path}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),

    #[error("unknown classifier family `{0}`")]
    UnknownFamily(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("class `{0}` has no samples")]
    EmptyClass(String),

    #[error("training data contains a single class ({0})")]
    SingleClass(String),

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("classifier `{0}` does not expose input gradients")]
    NotDifferentiable(String),

    #[error("query budget exceeded: requested {requested}, remaining {remaining}")]
    BudgetExceeded { requested: usize, remaining: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample size {requested} exceeds {available} available rows")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
