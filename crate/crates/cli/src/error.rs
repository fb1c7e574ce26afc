use std::path::{Path, PathBuf};

use graphred_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    /// 2 config, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Parse { .. } => 4,
            CliError::Core(e) => match e {
                CoreError::Numerical(_)
                | CoreError::Convergence { .. }
                | CoreError::Divergence { .. }
                | CoreError::Training { .. } => 3,
                _ => 2,
            },
        }
    }
}
