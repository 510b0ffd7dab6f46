use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by every layer of the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the set where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value left the representable binary64 range.
    #[error("overflow: {0}")]
    Overflow(String),

    /// Caller broke a documented precondition (e.g. negative field values).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Two inputs that must agree do not (e.g. a field positive on its zero set).
    #[error("inconsistent input: {0}")]
    Consistency(String),

    /// Projected descent hit its iteration cap.
    #[error("minimization did not converge after {} iterations (last energy {})", .0.iterations, .0.last_energy)]
    NotConverged(Box<crate::solver::SolverFailure>),

    /// Iterative linear solve hit its iteration cap.
    #[error("linear solve did not converge: residual {last_residual:e} after {iterations} iterations")]
    LinearSolve { iterations: usize, last_residual: f64, residual_history: Vec<f64> },

    /// Shooting could not bracket the free-boundary offset.
    #[error("no sign change of the shooting residual on mu in [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("parse error in {}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
