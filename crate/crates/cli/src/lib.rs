//! Library side of the `wgqb` command-line tool: configuration, the five
//! subcommands and their file outputs.

use std::path::Path;

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// Instability or an unphysical state; the physics refuses the request.
    #[error("refused: {0}")]
    Physics(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Validation(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}
