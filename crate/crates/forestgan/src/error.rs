//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Input outside the mathematical domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A caller-facing contract was violated (wrong arity, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A completed operation produced NaN or infinity while finite checks
    /// were enabled.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    /// Every singular value fell below the rank tolerance; the condition
    /// number is reported as infinity in logs.
    #[error("degenerate matrix: all singular values below tolerance {tolerance}")]
    DegenerateMatrix { tolerance: f64 },

    /// A model specification failed validation before any allocation.
    #[error("invalid model spec: {0}")]
    Spec(String),

    /// Training aborted because a loss became non-finite.
    #[error("divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
