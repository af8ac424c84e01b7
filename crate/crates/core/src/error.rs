use thiserror::Error;

/// Errors raised by the geometry, sampling and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A sampler or estimator refused to run outside its validity guard.
    #[error("guard violated: {0}")]
    Guard(String),
    /// Monte-Carlo estimation produced no usable samples.
    #[error("estimation failed: {0}")]
    EstimationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
