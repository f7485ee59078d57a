//! Error type shared by all modules.
//!
//! Every failure carries a human-readable diagnostic; callers that can
//! repair a condition (e.g. enlarge a window) get the required value in the
//! message and, where it matters programmatically, through dedicated fields.

use thiserror::Error;

/// Library-wide error enumeration.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative or truncated numerical procedure could not reach the
    /// requested tolerance; the message carries diagnostics (iteration
    /// counts, best residual, suggested parameters).
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    /// Input outside the mathematical domain of the operation
    /// (e.g. logarithm of a function whose certified infimum is ≤ 0).
    #[error("domain error: {0}")]
    DomainError(String),

    /// A frequency combination k·y is too close to an integer for the
    /// exact geometric-sum average to be evaluated stably.
    #[error("resonance: {0}")]
    Resonance(String),

    /// The active character/spec is degenerate (e.g. Nᵀm = 0), so the
    /// commutator construction for it carries no information.
    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),

    /// A frequency/spectral selection produced an empty set.
    #[error("empty selection: {0}")]
    EmptySelection(String),

    /// Malformed structured-text input.
    #[error("parse error: {0}")]
    ParseError(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
