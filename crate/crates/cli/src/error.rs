use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid suite: {0}")]
    Suite(String),
    #[error(transparent)]
    Library(#[from] dyadic_transport::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable machine-readable category for the stderr error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::Toml(_) => "config",
            CliError::Suite(_) => "suite",
            CliError::Library(dyadic_transport::Error::Domain(_)) => "domain",
            CliError::Library(dyadic_transport::Error::Guard(_)) => "guard",
            CliError::Library(_) => "estimation",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config_err<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}
