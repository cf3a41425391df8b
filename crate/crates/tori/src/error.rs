use thiserror::Error;

/// Errors from the lattice lab.
#[derive(Debug, Error)]
pub enum ToriError {
    #[error("cannot parse form: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("form is not symmetric")]
    NotSymmetric,

    #[error("form is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: String },

    #[error("form is singular")]
    Singular,

    #[error("bound too large: about {estimate:.3e} lattice points exceed the 1e8 limit")]
    BoundTooLarge { estimate: f64 },

    #[error("lambda {lambda} is beyond the enumerated range (max {max})")]
    OutOfRange { lambda: f64, max: f64 },

    #[error("isometry search infeasible: {combinations:.3e} candidate combinations exceed 1e7")]
    SearchInfeasible { combinations: f64 },

    #[error("integer overflow in exact arithmetic: {0}")]
    Overflow(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ToriError {
    /// True for malformed input, false for resource limits.
    pub fn is_validation(&self) -> bool {
        !matches!(self, ToriError::BoundTooLarge { .. } | ToriError::SearchInfeasible { .. } | ToriError::Overflow(_))
    }
}

pub type Result<T> = std::result::Result<T, ToriError>;
