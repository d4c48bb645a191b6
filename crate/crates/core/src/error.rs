use std::io;

use thiserror::Error;

/// Errors raised by the solvers and their I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or invalid configuration (grid mismatch, bad parameters,
    /// inverted bounds, shape mismatch).
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation was called with inputs violating its precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The time stepper produced a non-finite or runaway state.
    #[error("blow-up at step {step}: {reason}")]
    BlowUp { step: usize, reason: String },
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
