use std::path::PathBuf;

use esg_neuro::NeuroError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsgError {
    #[error("{0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("{what} = {value} is out of range")]
    OutOfRange { what: String, value: f64 },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("rate limited by the remote service")]
    RateLimited,

    #[error("malformed JSON response: {0}")]
    MalformedJson(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unknown article_id {0}")]
    UnknownId(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("series for {0} has not been scaled")]
    Unscaled(String),

    #[error(transparent)]
    Neuro(#[from] NeuroError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EsgError> = std::result::Result<T, E>;

impl EsgError {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl ToString) -> Self {
        EsgError::Parse { path: path.into(), line, message: message.to_string() }
    }
}
