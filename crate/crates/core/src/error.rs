//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by library operations.
#[derive(Error, Debug)]
pub enum Error {
    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// CSV input could not be parsed. Line numbers are 1-based and count
    /// the header row.
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    /// Experiment configuration rejected during load or validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
