use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("divergent quantity: {0}")]
    Divergence(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("parameters are in the wrong phase: {0}")]
    WrongPhase(String),
    #[error("truncation too small: {0}")]
    Truncation(String),
    #[error("permanent of a {0}x{0} matrix exceeds the supported size")]
    Size(usize),
    #[error("operator is not trace class: {0}")]
    NotTraceClass(String),
    #[error("numerical contract violated: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
