use thiserror::Error;

use crate::qp::QpStatus;
use crate::types::ClassId;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SctError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("history is empty")]
    EmptyHistory,

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("class {0} is missing from the data")]
    ClassMissing(ClassId),

    #[error("quadratic program did not converge: {status:?} after {iterations} iterations")]
    Solver { status: QpStatus, iterations: usize },

    #[error("covariance of class {0} is not positive semidefinite")]
    NonPsdCovariance(ClassId),

    #[error("accuracy band [{lo}, {hi}] unreachable; best attempt reached {best}")]
    BandUnreachable { lo: f64, hi: f64, best: f64 },
}

pub type Result<T> = std::result::Result<T, SctError>;
