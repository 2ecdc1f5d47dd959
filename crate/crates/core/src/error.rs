use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapaxError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("node budget exceeded: {requested} > {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("solver did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("quadrature did not converge: node counts disagree by {0:.3e}")]
    QuadratureNonConvergence(f64),

    #[error("unconverged input: {0}")]
    Unconverged(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CapaxError {
    fn from(e: std::io::Error) -> Self {
        CapaxError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CapaxError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CapaxError {
    CapaxError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
