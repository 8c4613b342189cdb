use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("invalid coefficients: {0}")]
    CoefficientValidity(String),

    #[error("grid alignment: {0}")]
    GridAlignment(String),

    #[error("ordering: {0}")]
    Ordering(String),

    #[error("requested time {t} exceeds the available horizon {horizon}")]
    Horizon { t: f64, horizon: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    Iteration {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("no sign change of r(Q_lambda) - 1 for |lambda| <= {limit}")]
    Range { limit: f64 },

    #[error("degenerate projection: denominator {0:e}")]
    DegenerateProjection(f64),

    #[error("degenerate fertility: spectral radius of Q[0] is {0:e}")]
    DegenerateFertility(f64),

    #[error("no nontrivial solution: {0}")]
    NoSolution(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
