use thiserror::Error;

use crate::means::KarcherOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimension must be positive")]
    EmptyMatrix,

    #[error("matrix is not symmetric: asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix is not positive definite: smallest eigenvalue {min_eigenvalue:e} <= {tolerance:e}")]
    NotPositiveDefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("symmetric eigensolver did not converge")]
    EigenFailure,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix set is empty")]
    EmptySet,

    #[error("matrix {index}: {source}")]
    InvalidSetEntry {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "Karcher iteration did not converge after {} iterations (gradient norm {:e})",
        .0.diagnostics.iterations, .0.diagnostics.gradient_norm
    )]
    NoConvergence(Box<KarcherOutcome>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
