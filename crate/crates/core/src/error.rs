use alloc::string::String;

use crate::qp::SolveStatus;

/// Errors raised by the simulation engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("series too short: need {needed}, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("problem is not convex (smallest eigenvalue {0:.3e})")]
    NotConvex(f64),
    #[error("too many binary variables: {count} exceeds limit {limit}")]
    TooManyBinaries { count: usize, limit: usize },
    #[error("infeasible bound configuration: {0}")]
    InfeasibleBounds(String),
    #[error("solver finished with status {status:?}: {context}")]
    Solver { status: SolveStatus, context: String },
    #[error("matrix is not positive definite after jitter {jitter:.1e}")]
    Factorization { jitter: f64 },
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("no sign change in cash flows; internal rate of return undefined")]
    IrrUndefined,
    #[error("horizon {horizon} failed: {cause}")]
    Horizon { horizon: usize, cause: alloc::boxed::Box<Error> },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
