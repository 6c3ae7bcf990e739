use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config: {0}")]
    Invalid(String),

    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },

    #[error(transparent)]
    Solver(#[from] shamanskii::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
