//! Command-line front end for the `granular-bath` solvers: JSON
//! configuration, run orchestration, output files and the validation suite.

pub mod config;
pub mod execute;
pub mod validate;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use config::{resolve, RawConfig, RunConfig, RunMode};
pub use execute::{execute, Outcome};

/// Exit code for configuration and I/O errors.
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] granular_bath::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(granular_bath::Error::NumericalFault { .. }) => execute::EXIT_NUMERICAL_FAULT,
            _ => EXIT_USAGE,
        }
    }
}
