use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed network document: {0}")]
    Parse(String),

    #[error("network description has {} violation(s); first: {}", .0.len(), .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),

    #[error("state outside the state space: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state space exceeds the enumeration cap of {cap} states")]
    StateSpaceTooLarge { cap: usize },

    #[error("generator is reducible or numerically singular")]
    Reducible,

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("acceptance vector is outside the representable set: {0}")]
    NotInT(String),
}
