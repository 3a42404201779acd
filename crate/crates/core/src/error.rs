use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("loop closure error: {0}")]
    LoopClosure(String),
    #[error("accuracy error: {0}")]
    Accuracy(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
