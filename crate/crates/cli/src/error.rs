use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or config values.
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: leafnet::Error,
    },

    #[error(transparent)]
    Core(#[from] leafnet::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn file(path: &Path, source: leafnet::Error) -> Self {
        CliError::File {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for input the user can fix by changing flags, config or data
    /// layout; 1 for failures while doing the work.
    pub fn exit_code(&self) -> i32 {
        use leafnet::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) | CliError::File { source: e, .. } => match e {
                E::InvalidArgument(_)
                | E::Layout(_)
                | E::ClassTooSmall { .. }
                | E::Incompatible(_)
                | E::Malformed { .. }
                | E::Json(_)
                | E::MissingFile(_)
                | E::BadMagic
                | E::VersionMismatch { .. }
                | E::Truncated => 2,
                _ => 1,
            },
        }
    }
}
