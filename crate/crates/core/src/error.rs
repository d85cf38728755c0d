use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every axis must be at least 1")]
    InvalidDims([usize; 3]),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimMismatch { expected: [usize; 3], got: [usize; 3] },

    #[error("invalid domain bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("malformed volume header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("volume payload size mismatch in {path}: header announces {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("malformed measure file {path}, line {line}: {reason}")]
    MalformedMeasure { path: PathBuf, line: usize, reason: String },

    #[error("point spread function is not centro-symmetric (template spectrum imaginary ratio {0:.3e})")]
    NonSymmetricPsf(f64),

    #[error("ground-truth sampling failed: {0}")]
    Sampling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed benchmark CSV: {0}")]
    MalformedCsv(String),

    #[error("plot rendering failed: {0}")]
    Plot(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
