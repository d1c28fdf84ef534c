use thiserror::Error;

/// Errors raised by the allocation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A secure user cannot reach its target even with unlimited priority.
    #[error("secure user {user} is infeasible: best achievable average secrecy rate {achievable:.6} < target {target:.6}")]
    Infeasible {
        user: usize,
        achievable: f64,
        target: f64,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed ensemble file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
