use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} must be finite, got {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("{what} out of domain: {reason}")]
    Domain { what: &'static str, reason: String },

    #[error("level {level} exceeds the supported maximum {cap}")]
    LevelCap { level: u32, cap: u32 },

    #[error("invalid level pair: coarse level {coarse} must be below fine level {fine}")]
    InvalidLevels { coarse: u32, fine: u32 },

    /// An exponent outside the guarded range; reported instead of producing `inf`.
    #[error("exponent {exponent} outside the representable range [-{limit}, {limit}]")]
    Overflow { exponent: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("at level N={level}, sample {sample}: {source}")]
    Sample {
        level: u32,
        sample: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { what, value })
    }
}

pub(crate) fn domain(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        what,
        reason: reason.into(),
    }
}
