//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on user-supplied data was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numerical routine failed (eigensolve, factorization, divergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Loss of positive definiteness during a sequential recursion.
    #[error("numerical conditioning failure at step {step}: {msg}")]
    Conditioning { step: usize, msg: String },

    /// A model does not satisfy the assumptions of the requested operation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Hyperparameter or noise tuning could not produce a usable optimum.
    #[error("tuning failed: {0}")]
    TuningFailure(String),

    /// A metric is undefined for the given arguments (e.g. TRAC of a zero vector).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
