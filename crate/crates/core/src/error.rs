use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: requested {requested}, only {available} stored")]
    InsufficientData { requested: usize, available: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("could not place agent and goal after {0} attempts")]
    UnsatisfiableSpawn(usize),

    #[error("invalid model: {0}")]
    Model(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training halted at step {step}: {reason}")]
    Halted { step: u64, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
