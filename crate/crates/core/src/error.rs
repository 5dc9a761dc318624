//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration input.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A value object violates its invariants (e.g. unnormalised populations).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Argument outside the physical domain (negative linewidth, T <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Transition outside the supported delta_m range.
    #[error("unsupported transition: delta_m = {delta_m} from ground index {ground}")]
    UnsupportedTransition { delta_m: i32, ground: usize },

    /// An algorithm failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Not enough data points to perform the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Underlying file-system failure.
    #[error("io error: {0}")]
    Io(String),

    /// Unparseable data file content.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
