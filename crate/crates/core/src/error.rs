use thiserror::Error;

/// Errors raised by the estimator, the analytic model and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// The prepared states do not determine the linear system.
    #[error("ill-posed estimation: {0}")]
    IllPosed(String),

    /// The solved functional predicts negative yields for some valid state.
    #[error("inconsistent yields: {0}")]
    Inconsistent(String),

    /// A planar functional was evaluated on a state off the X-Z plane.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A rate was requested but its denominator vanished.
    #[error("undefined rate: {0}")]
    UndefinedRate(String),

    /// Entries required by the estimator are absent from the yield table.
    #[error("missing yield entries: {}", .0.join(", "))]
    MissingEntries(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
