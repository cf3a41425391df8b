//! Error type shared by every stage of the forward and inverse pipelines.

use thiserror::Error;

/// Errors raised by the core library.
///
/// Variants split into two families: bad input ([`Error::is_validation`])
/// and numerical or stage failures. The CLI maps them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("metric validation failed at vertex {vertex}: {reason}")]
    MetricValidation { vertex: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt table: {0}")]
    CorruptTable(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("degenerate field: every vertex is nodal")]
    DegenerateField,

    #[error("sign propagation found an odd cycle through domains {cycle:?}")]
    OddCycle { cycle: Vec<usize> },

    #[error("domain graph is disconnected; unreached domains {unreached:?}")]
    Disconnected { unreached: Vec<usize> },

    #[error("truncation too deep: Gram condition number {condition:.3e} exceeds 1e12, use a smaller K")]
    TruncationTooDeep { condition: f64 },

    #[error("spectrum is not simple: close pairs {close_pairs:?}, jump integrals {multiplicities:?}")]
    NotSimple { close_pairs: Vec<(usize, usize)>, multiplicities: Vec<(usize, f64)> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("recovery failed: {0}")]
    RecoveryFailure(String),

    #[error("unreliable probe: q = {q:.6e}, fit residual {residual:.3e}, tolerance {tolerance:.3e}")]
    UnreliableProbe { residual: f64, tolerance: f64, q: f64 },

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed or inconsistent input.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidMesh(_)
            | Error::MetricValidation { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidArgument(_)
            | Error::CorruptTable(_)
            | Error::Io { .. }
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    /// Wraps an error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    /// Name of the innermost stage, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
