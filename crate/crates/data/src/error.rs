use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Core(#[from] omega_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid image file {path}: {reason}")]
    Pgm { path: String, reason: String },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("fold partition error: {0}")]
    Folds(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
