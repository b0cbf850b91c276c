use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] morphfg::Error),

    #[error("{path}: {source}")]
    InFile { path: String, source: morphfg::Error },

    #[error("cannot read `{path}`: {source}")]
    Read { path: String, source: io::Error },

    #[error("cannot write `{path}`: {source}")]
    Write { path: String, source: io::Error },

    #[error("config file `{path}`: {source}")]
    Config { path: String, source: serde_json::Error },

    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn read(path: &Path, source: io::Error) -> Self {
        CliError::Read {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Write {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn in_file(path: &Path, source: morphfg::Error) -> Self {
        CliError::InFile {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Adds the flag that fixes an unknown-language error.
pub fn with_hint(e: morphfg::Error) -> CliError {
    match e {
        morphfg::Error::UnknownLanguage { .. } => {
            CliError::Usage(format!("{e}; pass --lang-fallback <id> to use a known language"))
        }
        other => CliError::Core(other),
    }
}
