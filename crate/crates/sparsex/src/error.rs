//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by matrix construction, selectors, solvers and the
/// benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two arguments do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A caller violated an operation's contract (empty support, index out of
    /// range, non-finite input, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A pull budget is too small to run the requested schedule.
    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    /// Records with incompatible problem sizes were aggregated into one cell.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// A config file, matrix file or identifier string failed to parse.
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
