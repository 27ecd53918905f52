use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("problem is unbounded: {0}")]
    Unbounded(String),

    #[error("numerical failure: {0}")]
    NumericFailure(String),

    #[error("KKT Jacobian is singular even after regularization: {0}")]
    SingularJacobian(String),

    #[error("aggregate transform is numerically singular: {0}")]
    SingularAggregate(String),

    #[error("target profile lies outside the aggregate flexibility set")]
    InfeasibleTarget,

    #[error("secure summation aborted, participant missing: {0}")]
    MissingParticipant(String),

    #[error("profile has {got} data rows, expected {expected}")]
    RowCountMismatch { expected: usize, got: usize },

    #[error("non-numeric cell at line {line}: {cell:?}")]
    NonNumericCell { line: usize, cell: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
