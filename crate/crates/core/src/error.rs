use thiserror::Error;

/// Errors raised by the model, fitting and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("probability {0} outside the admissible interval")]
    ProbabilityOutOfRange(f64),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("association parameter {theta} outside the range of the {family} copula")]
    ThetaOutOfRange { family: &'static str, theta: f64 },
    #[error("survival level {u} is below the Gompertz survival floor {floor}; no finite event time")]
    BelowSurvivalFloor { u: f64, floor: f64 },
    #[error("root finder did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("dataset is empty")]
    EmptyData,
    #[error("record {index} is invalid: {reason}")]
    InvalidRecord { index: usize, reason: String },
    #[error("non-finite Hessian entry at ({row}, {col})")]
    NonFiniteHessian { row: usize, col: usize },
    #[error("covariance is not positive semi-definite (quadratic form {0})")]
    NotPositiveSemidefinite(f64),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl ModelError {
    /// True for problems with input data rather than configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            ModelError::EmptyData | ModelError::InvalidRecord { .. } | ModelError::Parse { .. } | ModelError::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;
