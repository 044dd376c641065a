use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Structural problems (wrong sizes, malformed files) are kept apart from
/// failed numerical checks: a failed check is reported in a
/// [`ValidationReport`](crate::env::ValidationReport), not as an error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("environment has a non-zero mean drift {0:?}")]
    Drift(Vec<f64>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("iterative solver stagnated after {iterations} iterations (relative residual {residual:e})")]
    Stagnation { iterations: usize, residual: f64 },

    #[error("problem too large for dense materialization: {size} sites (limit {limit})")]
    TooLarge { size: usize, limit: usize },

    #[error("not enough samples: got {got}, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("internal consistency failure: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
