use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not symmetric: max |A_ij - A_ji| = {defect:e} exceeds {tolerance:e}")]
    NotSymmetric { defect: f64, tolerance: f64 },

    #[error("operator is not positive: eigenvalue {eigenvalue:e} below -{threshold:e}")]
    NotPositive { eigenvalue: f64, threshold: f64 },

    #[error("operator is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("kernel value at grid point ({i}, {j}) = (t={t}, tau={tau}) is not finite")]
    NonFiniteKernel { i: usize, j: usize, t: f64, tau: f64 },

    #[error("restricted Gram block at s={s} is singular (condition estimate {condition:e})")]
    SingularGram { s: f64, condition: f64 },

    #[error("invalid nest: {0}")]
    InvalidNest(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("channel nests do not share a grid: block {block} differs")]
    MismatchedGrids { block: usize },

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
