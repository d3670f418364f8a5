use thiserror::Error;

use crate::search::RunHistory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("duplicate key: instance {instance:?} timestep {timestep}")]
    DuplicateKey { instance: String, timestep: i64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("channel {channel} has no observed values")]
    Imputation { channel: String },

    #[error("series of length {length} is shorter than window length {window}")]
    TooShort { length: usize, window: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("deadline exceeded")]
    Timeout,

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("ensemble error: {0}")]
    Ensemble(String),

    #[error("surrogate not ready")]
    NotReady,

    #[error("search produced no successful trial ({} trials recorded)", .history.records().len())]
    SearchFailed { history: Box<RunHistory> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
