use thiserror::Error;

/// Errors raised by tensor construction, layer forward/backward passes and
/// the optimizer.
#[derive(Debug, Error)]
pub enum TensorError {
    /// Shapes of the operands do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A forward or backward pass produced NaN/Inf, or a statistic is
    /// undefined (e.g. variance of a single element).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// API contract violated: backward on a non-scalar, a loss detached from
    /// the tape, mismatched optimizer state, ...
    #[error("contract error: {0}")]
    Contract(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;
