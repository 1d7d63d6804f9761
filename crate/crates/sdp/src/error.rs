use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("SDPA format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("log-det objectives cannot be written in SDPA format")]
    LogDetNotExportable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
