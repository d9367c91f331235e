use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("input shape: {0}")]
    Shape(String),
    #[error("sample size {got} too small (need at least {need})")]
    SampleSize { need: usize, got: usize },
    #[error("unsupported cumulant order {0}")]
    UnsupportedOrder(usize),
    #[error("cumulant {which} is below the degeneracy threshold")]
    Degenerate { which: String },
    #[error("coefficients not estimable: {0}")]
    NonEstimable(String),
    #[error("matrix has full row rank, no null space")]
    NoNullSpace,
    #[error("noise block is singular")]
    SingularNoiseBlock,
    #[error("infeasible model constraints: {0}")]
    Constraint(String),
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
}
