use thiserror::Error;

use crate::model::DecisionVector;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Pre-run validation found assumption violations (network, step
    /// schedule, or initial feasibility). Each string is one violation.
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    ValidationFailed(Vec<String>),

    /// Dykstra's residual stopped shrinking well above the tolerance,
    /// which is the signature of an empty intersection.
    #[error("intersection appears empty: Dykstra residual stalled at {residual:.3e}")]
    EmptyIntersection { residual: f64 },

    #[error("projection did not converge within {cycles} Dykstra cycles (residual {residual:.3e})")]
    ProjectionNotConverged { cycles: usize, residual: f64 },

    /// The inner solver exhausted its iteration budget. Carries the best
    /// iterate found so callers can inspect or continue from it.
    #[error("local solve did not converge within {iterations} iterations (residual {residual:.3e})")]
    ProxNotConverged {
        iterations: usize,
        residual: f64,
        best: Box<DecisionVector>,
    },

    #[error("centralized solve did not converge within {iterations} proximal-point iterations")]
    NonConvergence { iterations: usize },

    #[error("agent {agent} failed at iteration {iteration}: {source}")]
    AgentSolve {
        agent: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sample-size target unreachable below cap {cap}")]
    TargetUnreachable { cap: u64 },

    #[error("missing interior point: {0}")]
    MissingInterior(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
