//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("degenerate domain map: min dr/dR = {min_dr} at (R, theta) = ({r}, {theta})")]
    DegenerateMap { min_dr: f64, r: f64, theta: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("crossing not found in [{lo}, {hi}]: {detail}")]
    CrossingNotFound { lo: f64, hi: f64, detail: String },

    #[error("branch switch failed: {0}")]
    BranchSwitch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn non_convergence(msg: impl Into<String>) -> Self {
        Error::NonConvergence(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
