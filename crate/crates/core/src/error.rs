use thiserror::Error;

/// Crate-wide error type.
///
/// Solver outcomes (divergence, max iterations) are not errors; they are
/// reported through [`crate::solver::Outcome`]. Errors here are conditions
/// that prevent an operation from producing a result at all.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("transfer error: {0}")]
    Transfer(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index ({row}, {col}) out of range for {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("matrix is singular (zero pivot at column {col})")]
    SingularMatrix { col: usize },

    #[error("element inversion: det(F) <= 0 at a quadrature point of element {elem}")]
    ElementInversion { elem: usize },

    #[error("covariance matrix not positive definite after jitter escalation")]
    CovarianceNotPd,

    #[error("degenerate random field (all entries zero)")]
    DegenerateField,

    #[error("model produced a non-finite output")]
    ModelNan,

    #[error("optimizer step error: {0}")]
    OptStep(String),

    #[error("data generation failure: {0}")]
    DataGenFailure(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
