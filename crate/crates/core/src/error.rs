use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // The cause is part of the message, not the source chain, so
    // chain-printing callers do not repeat it.
    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{0}: file not found")]
    NotFound(PathBuf),

    #[error("{path}: header is missing columns: {missing:?}")]
    HeaderMismatch { path: PathBuf, missing: Vec<String> },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("text has no alphanumeric content: {0:?}")]
    EmptyText(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("dangling reference: {0}")]
    Dangling(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward trace is stale (trace version {trace}, params version {params})")]
    StaleTrace { trace: u64, params: u64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("product {0} has no resolved nutrients")]
    Unmapped(usize),

    #[error("instance too large for exhaustive search: {0} states")]
    TooLarge(u128),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause: source,
        }
    }
}
