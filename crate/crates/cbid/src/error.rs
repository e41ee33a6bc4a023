use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Core(#[from] cbid_core::Error),
    #[error("gradient check failed: max relative error {max_rel_error:e} over {trials} trials")]
    CheckFailed { max_rel_error: f64, trials: usize },
}

impl CliError {
    /// Process exit status: 2 usage, 3 data, 4 non-convergence, 1 failed check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(cbid_core::Error::NonConvergence { .. }) => 4,
            CliError::Core(cbid_core::Error::InvalidConfig(_)) => 2,
            CliError::CheckFailed { .. } => 1,
            _ => 3,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
