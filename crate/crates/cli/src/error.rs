use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure classes of the command-line harness, each with its exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.as_ref().to_path_buf();
        move |source| CliError::Io { path, source }
    }
}

impl From<stcx_core::Error> for CliError {
    fn from(e: stcx_core::Error) -> Self {
        match e {
            stcx_core::Error::Divergence { .. } | stcx_core::Error::NonFinite { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub(crate) fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path))
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(CliError::io(path))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    std::fs::write(path, bytes).map_err(CliError::io(path))
}
