use alloc::string::String;
use core::fmt;

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Parameters violate a documented precondition (Nyquist, window
    /// lengths, band limits, ...).
    InvalidParams(String),
    /// Tensor shapes are incompatible for the requested operation.
    ShapeMismatch(String),
    /// `backward` was called on a value that is not part of a recorded graph.
    NoGraph,
    /// A training batch was empty.
    EmptyBatch,
    /// A class label was outside the configured class count.
    InvalidLabel(usize),
    /// The training split does not contain every class.
    MissingClass(usize),
    /// A metric was requested from an empty confusion matrix.
    EmptyMatrix,
    /// Invalid moving-average window or tail length.
    InvalidWindow(String),
    /// An action index outside the environment's action space.
    InvalidAction(usize),
    /// Invalid run configuration.
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NoGraph => write!(f, "no recorded graph for backward pass"),
            Error::EmptyBatch => write!(f, "empty batch"),
            Error::InvalidLabel(l) => write!(f, "invalid class label {l}"),
            Error::MissingClass(c) => write!(f, "training split is missing class {c}"),
            Error::EmptyMatrix => write!(f, "confusion matrix has no samples"),
            Error::InvalidWindow(msg) => write!(f, "invalid window: {msg}"),
            Error::InvalidAction(a) => write!(f, "invalid action index {a}"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
