use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes shared by every module in the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside its documented domain.
    Parameter(String),
    /// An input violates a function contract (unnormalized probabilities,
    /// stale forward cache, zero vectors and the like).
    Contract(String),
    /// A lookup into caller-supplied data failed.
    Data(String),
    /// A metric is undefined for the given input, e.g. AUC with one class.
    UndefinedMetric(String),
    /// Training produced a NaN or infinite loss.
    NonFinite(String),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter(m) => write!(f, "invalid parameter: {m}"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::UndefinedMetric(m) => write!(f, "undefined metric: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
        }
    }
}

impl core::error::Error for Error {}
