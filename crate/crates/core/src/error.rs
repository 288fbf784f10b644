use thiserror::Error;

/// Errors raised by simulation, guide construction and the samplers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BridgeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at t = {t}, x = {state:?}")]
    NonFinite {
        what: &'static str,
        t: f64,
        state: Vec<f64>,
    },

    #[error("numerical failure at node {node}: {message}")]
    Numerical { node: usize, message: String },

    #[error("matrix not positive definite ({context}): smallest eigenvalue {min_eigenvalue:e} below {threshold:e}")]
    NotPositiveDefinite {
        context: String,
        min_eigenvalue: f64,
        threshold: f64,
    },

    #[error("oracle infeasible: no path out of {attempts} forward runs ended within {epsilon} of the endpoint")]
    OracleInfeasible { attempts: usize, epsilon: f64 },
}

pub type Result<T> = std::result::Result<T, BridgeError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(BridgeError::InvalidArgument(msg.into()))
}
