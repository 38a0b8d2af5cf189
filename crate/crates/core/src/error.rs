use thiserror::Error;

/// Errors raised by the geometric flatness pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("metric is not positive definite at {at:?} (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { at: Vec<f64>, min_eig: f64 },

    #[error("chart mismatch: expected `{expected}`, found `{found}`")]
    ChartMismatch { expected: String, found: String },

    #[error("group mismatch: expected {expected:?}, found {found:?}")]
    GroupMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape {shape:?} lies in the excluded set of section `{section}`; switch charts")]
    ChartExcluded { section: String, shape: Vec<f64> },

    #[error("control codistribution rank dropped to {found} (generic rank {expected})")]
    RankDrop { expected: usize, found: usize },

    #[error("singular implicit dynamics (condition {condition:e}); shape cannot be recovered")]
    Singular { condition: f64 },

    #[error("shape solve did not converge (best residual {residual:e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("sample at t = {t} is not dynamically feasible (residual {residual:e})")]
    Infeasible { t: f64, residual: f64 },

    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("planner: {0}")]
    Planner(String),

    #[error("invalid parameter `{name}` = {value}")]
    InvalidParameter { name: String, value: f64 },

    #[error("model: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Model(e.to_string())
    }
}
