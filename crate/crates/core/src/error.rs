use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument value is outside the documented domain (non-finite,
    /// negative where a count is required, and so on).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two tensors or sequences that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A synthesis spec asks for something unrealisable (e.g. a frequency
    /// at or above the Nyquist limit).
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A text document (sequence file, model file, CSV) failed to parse.
    /// `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A sequence is too short for the requested clip or horizon.
    #[error("sequence too short: need {needed} frames, have {have}")]
    InsufficientLength { needed: usize, have: usize },

    /// Cached forward state does not match what backward expects.
    #[error("inconsistent state: {0}")]
    State(String),

    /// Training produced a non-finite loss or gradient.
    #[error("training diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
