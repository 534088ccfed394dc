use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sequence source holds {available} points, {requested} requested")]
    ShortSequence { requested: u64, available: u64 },

    #[error("empty prefix")]
    EmptyPrefix,

    /// A covering box that the witness promised to be occupied holds no point.
    #[error("witness violation at q = {q}: covering box with anchor {anchor:?} holds no point")]
    WitnessViolation { q: u64, anchor: Vec<f64> },

    /// A geometric invariant that the construction guarantees was broken.
    #[error("internal check failed: {0}")]
    Internal(String),

    #[error("quasi-independence violated between levels {lambda} and {nu}: {intersection} > (1+eps) * {product}")]
    QuasiIndependence {
        lambda: usize,
        nu: usize,
        intersection: f64,
        product: f64,
    },

    #[error("construction stalled at level {level}: {reason}")]
    Stalled { level: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
