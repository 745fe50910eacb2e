use thiserror::Error;

/// Crate-wide error type.
///
/// Variants map onto the CLI exit codes: `Config` -> 2, `Numerical` -> 3,
/// `Artifact` and `Io` -> 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn artifact(msg: impl Into<String>) -> Self {
        Error::Artifact(msg.into())
    }
}
