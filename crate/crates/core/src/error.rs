use thiserror::Error;

/// Errors raised by the simulation and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration conflict: {0}")]
    Config(String),

    #[error("integer overflow computing {0}")]
    Overflow(&'static str),

    #[error("enumeration too large: {count} patterns exceeds bound {bound}")]
    EnumerationBound { count: u128, bound: u128 },

    #[error("rejection sampler exceeded {0} proposals")]
    RejectionExhausted(usize),

    #[error("fit precondition failed: {0}")]
    FitPrecondition(String),

    #[error("ambiguous period: {0}")]
    AmbiguousPeriod(String),

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite, got {value}")))
    }
}
