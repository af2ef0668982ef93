use thiserror::Error;

use crate::offload::OffloadSolution;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("argument {0} is outside the domain of the principal Lambert W branch")]
    LambertDomain(f64),
    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("linear program has an infeasible origin; constraint {0} has a negative bound")]
    OriginInfeasible(usize),
    #[error("linear program dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("simplex exceeded {0} pivots")]
    PivotLimit(usize),
}

/// Errors raised while evaluating the system model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("could not place users with exactly {per_cell} per cell after {attempts} attempts")]
    Unbalanced { per_cell: usize, attempts: usize },
}

/// Errors raised by the offloading and charging solvers.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("offloading problem is infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// Best-effort point (e.g. minimal latency violation) when one exists.
        best_effort: Option<Box<OffloadSolution>>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

impl SolverError {
    pub fn infeasible(reason: impl Into<String>) -> Self {
        SolverError::Infeasible {
            reason: reason.into(),
            best_effort: None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SolverError::Infeasible { .. })
    }
}

/// Errors raised while loading experiment configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}
