//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by geometry construction, network algebra, and optimization.
#[derive(Debug, Error)]
pub enum DsaError {
    /// Input outside the mathematical domain of an operation (zero displacement,
    /// nonpositive dimensions, coincident elements, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A geometry builder produced or was asked to produce an invalid layout.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// The loaded scatterer system (Z_ss + jΘ) is singular or too ill-conditioned
    /// to invert; carries the pivot-ratio condition estimate.
    #[error("resonant load configuration: condition estimate {cond_estimate:.3e} exceeds 1e12")]
    Resonance { cond_estimate: f64 },

    /// A quantity that the physical model guarantees (e.g. positive radiated
    /// power, positive semi-definite input resistance) came out violated.
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// Mismatched matrix/vector dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix required to have full (row) rank does not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The optimization target is identically zero (or otherwise degenerate).
    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    /// I/O or parse failure for the structured text formats.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DsaError {
    fn from(e: std::io::Error) -> Self {
        DsaError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DsaError>;
