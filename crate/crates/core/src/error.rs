use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs that cannot be combined (mismatched durations, shapes, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// Data that is inconsistent with the model it is being fitted to.
    #[error("infeasible estimate: {0}")]
    Infeasible(String),

    /// Malformed input file or document.
    #[error("format error: {0}")]
    Format(String),

    #[error("invalid time-tag stream: {0}")]
    InvalidStream(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Numerical(_) => "numerical",
            Error::Infeasible(_) => "infeasible",
            Error::Format(_) => "format",
            Error::InvalidStream(_) => "invalid_stream",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
