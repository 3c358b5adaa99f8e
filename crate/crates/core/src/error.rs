use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stage mismatch: codebook belongs to stage {codebook}, requested stage {requested}")]
    StageMismatch { codebook: usize, requested: usize },

    #[error("code index {index} out of range for stage {stage} (codebook size {size})")]
    CodeOutOfRange {
        stage: usize,
        index: usize,
        size: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("gradient tape: {0}")]
    Tape(String),

    #[error("bundle format: {0}")]
    Format(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
