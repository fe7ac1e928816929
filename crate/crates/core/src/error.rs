use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("index {index} out of range for {bits}-bit payload")]
    IndexOutOfRange { index: String, bits: u64 },
    #[error("invalid codeword: {0}")]
    InvalidCodeword(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
