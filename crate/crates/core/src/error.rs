use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violated a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A numeric parameter (temperature, step size, radius, ...) is out of range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Input is well-formed but carries no information for the requested test.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A metric is undefined for the given input (e.g. AUC with one class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("curriculum stage {0} has no samples")]
    EmptyStage(usize),

    #[error("non-finite gradient at round {round}")]
    NonFiniteGradient { round: usize },

    #[error("did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    /// An operation declined to run (existing outputs, stale checkpoint, ...).
    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
