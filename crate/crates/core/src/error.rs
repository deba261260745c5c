use alloc::string::String;
use core::fmt;

/// Everything that can go wrong in the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A model parameter violates its contract (`field` names the offending entry).
    InvalidModel { field: String, reason: String },
    /// A context word has the wrong length or does not end in `1`.
    InvalidWord { reason: String },
    /// A state does not belong to the model (word length differs from `v`).
    InvalidState { reason: String },
    /// A requested horizon or sample count is outside what the operation supports.
    InvalidArgument { reason: String },
    /// Exponential moments diverge (or cannot be bounded) at the requested point.
    OutsideCramerRegion { lambda: f64, mu: f64, reason: String },
    /// The truncated law is too short for the requested accuracy.
    HorizonTooShort { horizon: usize, required: usize, bound: f64 },
    /// The slope lies outside the domain on which the tilt solver is certified.
    Domain { alpha: f64, reason: String },
    /// The model has zero variance (`sigma^2 = 0`).
    Degenerate { reason: String },
    /// Importance sampling produced no usable weight.
    NoHits { reason: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidModel { field, reason } => write!(f, "invalid model at `{field}`: {reason}"),
            Error::InvalidWord { reason } => write!(f, "invalid context word: {reason}"),
            Error::InvalidState { reason } => write!(f, "invalid memory state: {reason}"),
            Error::InvalidArgument { reason } => write!(f, "invalid argument: {reason}"),
            Error::OutsideCramerRegion { lambda, mu, reason } => {
                write!(f, "(lambda, mu) = ({lambda}, {mu}) is outside the Cramer region: {reason}")
            }
            Error::HorizonTooShort { horizon, required, bound } => write!(
                f,
                "horizon L = {horizon} leaves truncation bound {bound:e}; rerun with L >= {required}"
            ),
            Error::Domain { alpha, reason } => write!(f, "alpha = {alpha} outside certified domain: {reason}"),
            Error::Degenerate { reason } => write!(f, "degenerate model: {reason}"),
            Error::NoHits { reason } => write!(f, "importance sampling failed: {reason}"),
        }
    }
}

impl core::error::Error for Error {}
