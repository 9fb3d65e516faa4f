use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] lookahead_core::Error),

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration and validation problems, 3 when an enumeration
    /// budget is exceeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                lookahead_core::Error::BudgetExceeded { .. } => 3,
                lookahead_core::Error::Io(_) => 1,
                _ => 2,
            },
            CliError::Write { .. } => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
