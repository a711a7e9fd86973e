use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("block {block}: design matrix is rank deficient (rank {rank} < {cols} columns)")]
    RankDeficient { block: String, rank: usize, cols: usize },

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("timepoints must be distinct (value {0} repeats)")]
    DegenerateTimepoints(f64),

    #[error("design must contain at least one group")]
    EmptyDesign,

    #[error("blocks {i} and {j} are not orthogonal: max |X_i'X_j| = {max_cross:e}")]
    NotOrthogonal { i: usize, j: usize, max_cross: f64 },

    #[error("residual degrees of freedom {r} are fewer than the {p} timepoints")]
    InsufficientResidualDof { r: usize, p: usize },

    #[error("block {0} uses different timepoints from block 0")]
    MixedTimepoints(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("block {block}: profile has {q} columns but only {p} timepoints")]
    ProfileTooWide { block: usize, q: usize, p: usize },

    #[error("quadratic covariance estimate is singular (data lie in the mean space)")]
    DegenerateCovariance,

    #[error("block {0}: Z'S^-1 Z is singular")]
    IllConditionedProfile(usize),

    #[error("n*p = {size} exceeds the vec-form limit {limit}")]
    SizeLimit { size: usize, limit: usize },

    #[error("residual sum of squares must be positive, got {0:e}")]
    NonpositiveRmss(f64),

    #[error("{which} standardizer is singular")]
    NonsingularityViolated { which: &'static str },

    #[error("correlation {0} is outside [0, 1)")]
    InvalidCorrelation(f64),

    #[error("{failed} of {total} replications failed")]
    ExperimentUnstable { failed: usize, total: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing value at row {row}, column {col}")]
    MissingValue { row: usize, col: usize },

    #[error("non-numeric value {value:?} at row {row}, column {col}")]
    NonNumeric { row: usize, col: usize, value: String },

    #[error("timepoint header is not strictly increasing")]
    UnsortedTimepoints,

    #[error("group {0:?} has no rows")]
    EmptyGroup(String),

    #[error("no candidate model could be fitted")]
    EmptyGrid,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::DegenerateCovariance
            | Error::IllConditionedProfile(_)
            | Error::NonpositiveRmss(_)
            | Error::NonsingularityViolated { .. }
            | Error::ExperimentUnstable { .. } => ErrorKind::Numeric,
            Error::Io { .. } => ErrorKind::Io,
            Error::Csv(e) if e.is_io_error() => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
