use thiserror::Error;

/// Errors raised by the geometry kernel and the certification pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorseError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("determinant {det} is too far from 1 to renormalize")]
    Determinant { det: f64 },

    #[error("singular or non-unimodular isometry: {0}")]
    SingularIsometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid type vector: {0}")]
    InvalidType(String),

    #[error("coincident points")]
    Coincident,

    #[error("segment is not regular: log-eigenvalue gap {gap:.3e} at index {index}")]
    Degenerate { index: usize, gap: f64 },

    #[error("eigenvalue moduli tie at pattern index {index} (log gap {gap:.3e})")]
    ModulusTie { index: usize, gap: f64 },

    #[error("flag patterns are incompatible: {0}")]
    Pattern(String),

    #[error("flags are not antipodal (margin {margin:.3e})")]
    NotAntipodal { margin: f64 },

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("path domain too short: {0}")]
    DomainTooShort(String),

    #[error("missing calibration entry: {0}")]
    CalibrationMissing(String),

    #[error("calibration defect: {0}")]
    CalibrationDefect(String),

    #[error("enumeration budget exceeded: {count} paths requested, limit {limit}")]
    EnumerationOverflow { count: u128, limit: u128 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, MorseError>;

impl From<std::io::Error> for MorseError {
    fn from(e: std::io::Error) -> Self {
        MorseError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for MorseError {
    fn from(e: serde_json::Error) -> Self {
        MorseError::Parse(e.to_string())
    }
}
