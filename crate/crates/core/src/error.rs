use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("toy script has no entry for context {0:?}")]
    ScriptMiss(String),

    #[error("context of {len} tokens exceeds backend limit of {limit}")]
    ContextTooLong { len: usize, limit: usize },

    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: usize, message: String },

    #[error("malformed backend response: {0}")]
    BadResponse(String),

    #[error("rank {rank} exceeds the {available} visible candidates")]
    RankExceedsList { rank: usize, available: usize },

    #[error("backend does not expose raw logit scores")]
    BackendLacksLogits,

    #[error("token {0:?} is not in the toy vocabulary")]
    UnknownToken(String),

    #[error("script line {line}: {message}")]
    ScriptParse { line: usize, message: String },

    #[error("invalid step distribution: {0}")]
    InvalidDistribution(String),

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("every seed failed for this question: {0}")]
    EmptyExploration(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    DatasetParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset {0} contains no examples")]
    EmptyDataset(PathBuf),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the failure is transient and the request may be retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::BackendUnavailable { .. })
    }
}
