//! Crate-wide error type.

/// Errors produced by geometry, codec, and evaluation routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A box has non-finite fields or non-positive extents.
    #[error("invalid box: {0}")]
    InvalidBox(String),

    /// A weighted combination has no positive weight mass.
    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    /// Input points do not determine the requested construction.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A constructed box collapsed to zero extent.
    #[error("degenerate box: {0}")]
    DegenerateBox(String),

    /// Tensor shapes do not match the expected layout.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A scalar argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
