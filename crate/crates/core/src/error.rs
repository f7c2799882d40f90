use thiserror::Error;

/// Errors produced by the convolution library.
#[derive(Debug, Error)]
pub enum Error {
    /// Buffer length or tensor/matrix dimensions do not agree.
    #[error("size mismatch: {0}")]
    Size(String),

    /// Convolution geometry yields an empty or negative output.
    #[error("invalid output shape: {0}")]
    Shape(String),

    /// Wrong number of interpolation points for the requested F(m, r).
    #[error("expected {expected} interpolation points for F({m}, {r}), got {got}")]
    Arity {
        m: usize,
        r: usize,
        expected: usize,
        got: usize,
    },

    /// Transform construction failed (duplicate points, unsupported size, ...).
    #[error("transform construction failed: {0}")]
    Construction(String),

    /// The layer cannot be executed by the requested algorithm variant.
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// Malformed serialized data.
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
