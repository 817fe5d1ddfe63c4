use thiserror::Error;

/// Errors raised anywhere in the valuation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("insufficient history: need at least 2 observations, got {0}")]
    InsufficientHistory(usize),
    #[error("calibration failed on theta segment {segment}: {message}")]
    Calibration { segment: usize, message: String },
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("linear solve failed for scenario {scenario} at t = {t}: {message}")]
    LinearSolve {
        scenario: usize,
        t: f64,
        message: String,
    },
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("no convergence after {iterations} iterations: {message}")]
    NoConvergence { iterations: usize, message: String },
    #[error("non-monotone convergence: difference ratio {ratio}")]
    NonMonotoneConvergence { ratio: f64 },
    #[error("fixed-point iteration diverged after {0} iterations")]
    Divergence(usize),
    #[error("relative error undefined: reference value is zero")]
    RelativeErrorUndefined,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rank deficient: requested {requested}, available {available}")]
    RankDeficient { requested: usize, available: usize },
    #[error("sensitivity index undefined: output variance is zero")]
    UndefinedIndex,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
