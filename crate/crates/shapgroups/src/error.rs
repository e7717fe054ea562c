use std::path::{Path, PathBuf};

use shapgroups_core::pipeline::Stage;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    /// Malformed user input: configuration, CSV cells, schema, scoring rows.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] shapgroups_core::Error),
    #[error("stage `{}` failed: {message}", stage.name())]
    Stage { stage: Stage, message: String },
    #[error("verification failed: {0}")]
    Verify(String),
}

impl Error {
    /// 1 for stage and verification failures, 2 for input and configuration
    /// problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Stage { .. } | Error::Verify(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn json(path: &Path) -> impl FnOnce(serde_json::Error) -> Error + '_ {
        move |source| Error::Json { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
