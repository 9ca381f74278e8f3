//! Crate-wide error type.

use std::fmt;

/// Errors produced by geometry, sampling, fitting and estimation routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A point or bound vector has the wrong number of coordinates.
    DimensionMismatch { expected: usize, got: usize },
    /// A hyperrectangle bound is outside `[0, 1]` or has non-positive extent.
    InvalidBounds { dim: usize, lower: f64, upper: f64 },
    /// A stratum id was not found in the stratification.
    UnknownStratum(u64),
    /// A dimension index is out of range for the stratification.
    DimensionOutOfRange { dim: usize, max: usize },
    /// A sample batch of size zero was requested.
    EmptySample,
    /// A polynomial basis was requested on a degenerate interval.
    DegenerateInterval { lower: f64, upper: f64 },
    /// Quadrature order too low for the requested polynomial degree.
    InsufficientQuadrature { order: usize, required: usize },
    /// The sample budget cannot accommodate any degree-1 basis function.
    DegenerateIndexSet { dim: usize, budget: usize },
    /// A point lies outside the stratum it is being evaluated on.
    PointOutsideStratum,
    /// Fitting was attempted with non-finite sample values.
    NonFiniteValue { index: usize, value: f64 },
    /// The model returned a non-finite value at the given input point.
    ModelFailure { point: Vec<f64>, detail: String },
    /// The black-box child process violated the line protocol.
    Protocol(String),
    /// Mismatched lengths between weights and stages, or an empty ensemble.
    InvalidEnsemble(String),
    /// Invalid run or study configuration.
    InvalidConfig(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Error::InvalidBounds { dim, lower, upper } => {
                write!(f, "invalid bounds [{lower}, {upper}] in dimension {dim}")
            }
            Error::UnknownStratum(id) => write!(f, "unknown stratum id {id}"),
            Error::DimensionOutOfRange { dim, max } => {
                write!(f, "dimension index {dim} out of range (max {max})")
            }
            Error::EmptySample => write!(f, "sample size must be at least 1"),
            Error::DegenerateInterval { lower, upper } => {
                write!(f, "degenerate interval [{lower}, {upper}]")
            }
            Error::InsufficientQuadrature { order, required } => {
                write!(f, "quadrature order {order} too low, need at least {required}")
            }
            Error::DegenerateIndexSet { dim, budget } => write!(
                f,
                "budget {budget} admits no degree-1 term in dimension {dim}: surrogate would be constant"
            ),
            Error::PointOutsideStratum => write!(f, "point lies outside the stratum"),
            Error::NonFiniteValue { index, value } => {
                write!(f, "non-finite sample value {value} at index {index}")
            }
            Error::ModelFailure { point, detail } => {
                write!(f, "model evaluation failed at {point:?}: {detail}")
            }
            Error::Protocol(msg) => write!(f, "black-box protocol error: {msg}"),
            Error::InvalidEnsemble(msg) => write!(f, "invalid ensemble: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
