use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or unknown configuration; exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    /// A check or assertion failed; exit status 1.
    #[error("assertion failed: {0}")]
    Assertion(String),
    /// A library call failed while running; exit status 1.
    #[error(transparent)]
    Core(#[from] pacile::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assertion(_) | CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}
