use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: row {row}, column {column} ({name}): cannot parse {value:?} as a number")]
    NonNumeric {
        path: PathBuf,
        row: usize,
        column: usize,
        name: String,
        value: String,
    },

    #[error("{context}: channel not found: {name}")]
    ChannelNotFound { context: String, name: String },

    #[error("channel mismatch: model expects {expected:?}, input has {found:?}")]
    ChannelMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("series too short: need at least {required} points, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: malformed {what}: {detail}")]
    Format {
        path: PathBuf,
        what: &'static str,
        detail: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 2 for data problems,
    /// 3 for numeric failures, 1 for bad parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam(_) => 1,
            Error::NonFiniteLoss { .. } | Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
