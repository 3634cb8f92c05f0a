//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An algorithm could not be laid out on the given graph.
    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),

    #[error("unsupported instance: {0}")]
    UnsupportedInstance(String),

    /// A query left the feasible ball. Algorithms own projection, so this is
    /// a program bug, not an instance error.
    #[error("domain violation at node {node}: |x| = {norm} exceeds B = {bound}")]
    DomainViolation { node: usize, norm: f64, bound: f64 },

    /// A query rule asked for a record outside its ancestor set.
    #[error("visibility violation: node {node} requested record of non-ancestor {requested}")]
    VisibilityViolation { node: usize, requested: usize },

    #[error("invalid query at node {node}: {message}")]
    InvalidQuery { node: usize, message: String },

    #[error("convergence failure after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("budget error: {0}")]
    Budget(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
