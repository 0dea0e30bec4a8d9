//! Configuration, run orchestration and file outputs for the `qspeckle`
//! binary.

mod commands;
mod config;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{analyze, frames, simulate, theory, FramesReport, Manifest, MapEntry};
pub use config::{FramesConfig, MethodName, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Aliasing(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] qspeckle_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Aliasing(_) | CliError::Core(qspeckle_core::Error::Aliasing { .. }) => 3,
            CliError::Io { .. } | CliError::Core(qspeckle_core::Error::Io(_)) => 4,
            CliError::Core(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
