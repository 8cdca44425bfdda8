use selcube_core::sql::SqlError;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error("catalog error: {0}")]
    Catalog(String),
    #[error("binder error: {0}")]
    Bind(String),
    #[error("execution error: {0}")]
    Exec(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for EngineError {
    fn from(e: std::io::Error) -> Self {
        EngineError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

pub(crate) fn bind_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(EngineError::Bind(msg.into()))
}

pub(crate) fn exec_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(EngineError::Exec(msg.into()))
}
