//! Error type shared by all core modules.

use core::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two operands disagree on a dimension that must match.
    DimMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    /// A scalar or structural argument violates its precondition.
    InvalidParam { context: &'static str },
    /// A class label lies outside `[0, n_classes)`.
    LabelOutOfRange { label: usize, n_classes: usize },
    /// A mini-batch request exceeds the available samples (or is zero).
    BatchSize { requested: usize, available: usize },
    /// A marginal passed to the transport solver is not a probability vector.
    NotAProbability { context: &'static str },
    /// A cost matrix entry is negative, NaN or infinite.
    NonFiniteCost,
    /// The enumeration oracle only handles square instances up to 8x8.
    OracleUnsupported { n: usize, m: usize },
    /// A metric was asked for on a score set that cannot support it.
    DegenerateScores { context: &'static str },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimMismatch {
                context,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch in {context}: expected {expected}, found {found}"
            ),
            Error::InvalidParam { context } => write!(f, "invalid parameter: {context}"),
            Error::LabelOutOfRange { label, n_classes } => {
                write!(f, "label {label} out of range for {n_classes} classes")
            }
            Error::BatchSize {
                requested,
                available,
            } => write!(
                f,
                "batch size {requested} out of range for {available} samples"
            ),
            Error::NotAProbability { context } => {
                write!(f, "{context} is not a probability vector")
            }
            Error::NonFiniteCost => write!(f, "cost matrix entries must be finite and >= 0"),
            Error::OracleUnsupported { n, m } => write!(
                f,
                "exact oracle requires a square instance with n = m <= 8, got {n}x{m}"
            ),
            Error::DegenerateScores { context } => write!(f, "degenerate score set: {context}"),
        }
    }
}

impl core::error::Error for Error {}
