use std::io;

use thiserror::Error;

use crate::flipper::FlipperConfig;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("no training data for configuration {0}")]
    MissingConfiguration(FlipperConfig),
    #[error("no Q value defined for {0}")]
    UndefinedQ(String),
    #[error("operation requires a squared-exponential kernel")]
    UnsupportedKernel,
    #[error("GP training failed: {0}")]
    Training(String),
    #[error("final state reached: no missing bins left to probe")]
    FinalState,
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
