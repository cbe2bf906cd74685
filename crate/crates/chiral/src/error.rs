use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frequency class violated: {0}")]
    FrequencyClass(String),
    #[error("basis too large: {entries} entries exceeds the limit {limit}")]
    Resource { entries: usize, limit: usize },
    #[error("resolvent pole: |q - k| = {distance:e} at q = {q}")]
    Pole { q: Complex64, distance: f64 },
    #[error("theta pole at z = {0}")]
    ThetaPole(Complex64),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("expected a simple kernel, found dimension {0}")]
    Multiplicity(usize),
    #[error("truncation too small: residual {0:e}")]
    Truncation(f64),
    #[error("basis mismatch: {0}")]
    BasisMismatch(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
