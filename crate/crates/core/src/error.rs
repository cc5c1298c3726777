use thiserror::Error;

/// Errors raised by grid construction, the numerical operators and the
/// experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("domain coverage: {0}")]
    Coverage(String),

    #[error("insufficient support: {0}")]
    InsufficientSupport(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("minimum of {which} lies on the grid boundary (node {node})")]
    BoundaryMinimum { which: &'static str, node: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("empty common support")]
    EmptySupport,

    #[error("simulation diverged on path {path} at t = {time}")]
    Divergence { path: usize, time: f64 },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("regime not covered: {0}")]
    RegimeNotCovered(String),

    #[error("no exceedance witness found for alpha = {0}")]
    WitnessNotFound(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
