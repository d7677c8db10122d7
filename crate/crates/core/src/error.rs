use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The bandwidths are too close together (or the weights too large) for
    /// the signed combination to keep significant digits.
    #[error("ill-conditioned bandwidths: {0}")]
    IllConditionedBandwidths(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("no feasible weights: {0}")]
    NoFeasibleWeights(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
