use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
