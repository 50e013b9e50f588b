use std::fmt::Display;
use std::path::Path;

use thiserror::Error;

/// Exit status 2 for bad input, 1 for everything else.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

/// Wrap an error about reading or validating `path`.
pub fn bad_input<E: Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}

/// Wrap an error about producing `path`.
pub fn failed_output<E: Display>(path: &Path) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Internal(format!("{}: {e}", path.display()))
}
