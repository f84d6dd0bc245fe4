//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by group construction, factorization, grids and operators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Vector or matrix dimensions do not match the structure.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A structure matrix fails skew-symmetry at the given entry.
    #[error("J[{index}] not skew at ({row},{col})")]
    NotSkew { index: usize, row: usize, col: usize },

    /// A skew form is (numerically) degenerate.
    #[error("degenerate skew form: |det J_eta| = {det:e} below floor {floor:e} at eta = {eta:?}")]
    Degenerate { det: f64, floor: f64, eta: Vec<f64> },

    /// A scalar parameter lies outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// Two grid functions live on incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An exponent lies outside the range where the estimate is stated.
    #[error("exponent p = {p} not admissible: need 1 <= p <= {bound} = (2m+2)/(m+3)")]
    Admissibility { p: f64, bound: f64 },

    /// The kernel convergence guard refused the request.
    #[error("convergence guard: {0}")]
    Guard(String),

    /// A special function was requested outside its stable regime.
    #[error("range error: {0}")]
    Range(String),

    /// An iterative quadrature failed to reach its tolerance.
    #[error("quadrature did not converge: achieved error estimate {achieved:e}")]
    Quadrature { achieved: f64 },

    /// Configuration or serialized input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}
