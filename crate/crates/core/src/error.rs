use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("moment degree {degree} exceeds the configured maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("{0} is not in the open upper half-plane")]
    NotUpperHalfPlane(Complex64),

    #[error("evaluation at a singular point t = {0} (atom or branch point)")]
    Singular(f64),

    #[error("pole of {what} at {at}")]
    Pole { what: &'static str, at: Complex64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid spike set: {0}")]
    InvalidSpikes(String),

    #[error("invalid inversion schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("range mismatch: {0}")]
    RangeMismatch(String),

    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
