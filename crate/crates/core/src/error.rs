//! Error types shared by every engine module.

use thiserror::Error;

/// Engine-wide error enumeration.
///
/// The CLI maps these onto distinct process exit codes, so the variants are
/// deliberately coarse: invariant violations, enumeration budgets, and
/// numeric failures are kept apart.
#[derive(Debug, Error)]
pub enum EngineError {
    /// Two vectors that must live on the same scenario space disagree in length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A domain invariant was violated at construction or call time.
    #[error("validation: {0}")]
    Validation(String),

    /// An enumeration request exceeds the configured budget.
    #[error("capacity: {0}")]
    Capacity(String),

    /// A numeric guard tripped (division floor, step-size bound, ...).
    #[error("numeric: {0}")]
    Numeric(String),

    /// An iterative procedure did not converge; carries the best value seen.
    #[error("non-convergence: {reason} (best value {best_value})")]
    NonConvergence { reason: String, best_value: f64 },

    /// A dual evaluation was requested on a table with no entries.
    #[error("empty penalty table")]
    EmptyTable,

    /// The operation is not available for this construction.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;
