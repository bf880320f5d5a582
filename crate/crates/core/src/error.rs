use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("state {0} is not a node of the flux mesh")]
    OffMesh(f64),
    #[error("flux level {0} is not a level of the flux mesh")]
    LevelNotOnMesh(f64),
    #[error("assumption violated ({name}): {detail}")]
    Assumption { name: &'static str, detail: String },
    #[error("internal invariant failed: {0}")]
    Internal(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("run aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
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
