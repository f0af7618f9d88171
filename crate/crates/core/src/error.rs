//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used by all fallible operations in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by mesh construction, media ingestion, assembly and the
/// numerical solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid mesh parameters (zero extents, zero subdivision counts, ...).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A block, edge or DOF index outside the range of the mesh it was
    /// used with.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Malformed media input (bad header, truncated payload, dimension
    /// mismatch against the fine grid).
    #[error("invalid media input: {0}")]
    InvalidMedia(String),

    /// A stiffness tensor that is not symmetric positive definite; reports
    /// the first offending fine cell.
    #[error("stiffness tensor not positive definite in fine cell ({x}, {y}): {detail}")]
    NotPositiveDefinite { x: usize, y: usize, detail: String },

    /// Mismatched vector/operator dimensions.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A dense or sparse factorization failed (loss of positive
    /// definiteness, singular pivot, ...).
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// An iterative process (eigen residual, saddle-point refinement, power
    /// iteration) did not reach its tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// A per-block spectral solve produced residuals above tolerance.
    #[error("spectral solve failed on block {block}: {detail}")]
    Spectral { block: usize, detail: String },

    /// A saddle-point solve for a localized basis function failed its
    /// residual check.
    #[error("saddle-point solve failed on block {block} (mode {mode}): {detail}")]
    Saddle {
        block: usize,
        mode: usize,
        detail: String,
    },

    /// Requested more auxiliary modes than a block has active DOFs.
    #[error("block {block} has {active} active DOFs, cannot extract {requested} modes")]
    TooManyModes {
        block: usize,
        active: usize,
        requested: usize,
    },

    /// Time step rejected by the CFL verification.
    #[error("time step {tau} exceeds the stable bound {bound} (safety factor {safety})")]
    UnstableTimeStep { tau: f64, bound: f64, safety: f64 },

    /// The leapfrog recurrence produced NaN or infinite displacements,
    /// the telltale of an unstable run.
    #[error("non-finite displacement values at time step {step}")]
    NonFinite { step: usize },

    /// Invalid inputs to an error-norm or study computation (zero-norm
    /// reference, mismatched study levels, ...).
    #[error("analysis error: {0}")]
    Analysis(String),

    /// Underlying I/O failure while reading or writing model files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
