use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its admissible range.
    InvalidArgument(String),
    /// Two vectors or operators that must agree in size do not.
    DimensionMismatch { expected: usize, found: usize },
    /// The state left the finite range (or exceeded the blow-up threshold).
    BlowUp { time: f64 },
    /// An iterative solver stopped before reaching its tolerance.
    NotConverged { iterations: usize, residual: f64 },
    /// A factorization met a non-positive pivot.
    NotPositiveDefinite { row: usize },
    /// Not enough usable samples for a fit.
    InsufficientData { needed: usize, found: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::BlowUp { time } => write!(f, "state blew up at t = {time}"),
            Error::NotConverged { iterations, residual } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:e})"
            ),
            Error::NotPositiveDefinite { row } => {
                write!(f, "matrix is not positive definite (pivot {row})")
            }
            Error::InsufficientData { needed, found } => {
                write!(f, "need at least {needed} samples, found {found}")
            }
        }
    }
}

impl core::error::Error for Error {}
