use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Inconsistent dimensions, malformed matrices, invalid config values.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Riccati iteration failed or the resulting loop is unstable.
    #[error("synthesis error: {message} (residual {residual:e})")]
    Synthesis { message: String, residual: f64 },
    /// The QP solver could not produce a usable iterate.
    #[error("solver error: {0}")]
    Solver(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
