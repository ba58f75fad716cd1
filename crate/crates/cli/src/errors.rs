//! CLI error taxonomy with the stable exit-code contract:
//! 0 success, 2 config, 3 I/O, 4 data, 5 fairness gate.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("fairness gate: {0} record(s) outside the reasonable range")]
    FairnessGate(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Data(_) => 4,
            CliError::FairnessGate(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
