use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("infeasible instance: C = {c} MW outside [{lower}, {upper}] MW")]
    Infeasible { c: f64, lower: f64, upper: f64 },

    #[error("agent {agent}: {kind} disutility is not supported by the dual-ascent comparator")]
    UnsupportedDisutility { agent: usize, kind: &'static str },

    #[error("disutility is not strongly convex (agent {agent})")]
    NotStronglyConvex { agent: usize },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
