//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library. Configuration problems are separated from
/// runtime numeric failures so callers (notably the CLI) can map them to
/// distinct exit codes.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid specification parameters (non-stochastic rows, |coeff| >= 1, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Index or window out of the realized range.
    #[error("range error: {0}")]
    Range(String),

    /// Invalid argument combination.
    #[error("argument error: {0}")]
    Argument(String),

    /// Non-finite value, undefined log, acceptance starvation, ...
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An operation mode was requested that the inputs cannot support.
    #[error("capability error: {0}")]
    Capability(String),

    /// Sampling from a kernel failed.
    #[error("kernel error: {0}")]
    Kernel(String),

    /// A claimed minorization left negative residual mass.
    #[error("minorization violated (margin {margin:.3e}): {context}")]
    MinorizationViolation { margin: f64, context: String },

    /// No admissible constants below the search caps.
    #[error("no admissible constants: {0}")]
    NoGoodConstant(String),

    /// The scanned horizon contains no good time.
    #[error("no good time: {0}")]
    NoGoodTime(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
