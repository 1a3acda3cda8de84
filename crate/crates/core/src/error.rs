use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (Cholesky pivot {pivot} non-positive)")]
    NotPositiveDefinite { pivot: usize },

    #[error("covariate Gram matrix is singular: {d} covariate column(s) are linearly dependent")]
    RankDeficient { d: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch across groups: group {group} has {what} = {found}, expected {expected}")]
    DimensionMismatch {
        group: usize,
        what: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("invalid count {value:?} at group {group}, row {row}, column {col}: counts must be non-negative integers")]
    InvalidCount {
        group: usize,
        row: usize,
        col: usize,
        value: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scatter matrix has zero diagonal entry {index} and the diagonal is unpenalized")]
    DegenerateScatter { index: usize },

    #[error("root finder failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("solver failure in group {group}, outer iteration {iteration}: {source}")]
    Solver {
        group: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("every grid point failed: {}", .0.join("; "))]
    GridFailed(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn in_group(self, group: usize, iteration: usize) -> Self {
        Error::Solver {
            group,
            iteration,
            source: Box::new(self),
        }
    }
}
