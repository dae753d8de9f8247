use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("column `{0}` has no observed values")]
    AllMissing(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected} covariates, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("empty input")]
    EmptyInput,
    #[error("no comparable pairs")]
    NoComparablePairs,
    #[error("optimizer did not converge after {iterations} iterations (objective trace: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("perfect separation detected; refit with a positive l2 penalty")]
    Separation,
    #[error("every relevance query produced constant proximity labels")]
    AllQueriesDegenerate,
    #[error("every tuning trial failed; first failure: {0}")]
    AllTrialsFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
