//! Experiment runner for the burning second-price fee mechanism.
//!
//! Every command reads an [`config::Experiment`], writes its outputs under
//! the `out` directory and returns the process exit code: `0` on success,
//! `2` for configuration errors and `3` when violations were found.

pub mod block;
pub mod check;
pub mod config;
pub mod output;
pub mod simulate;
pub mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    /// Human-readable summary for stdout.
    pub summary: Vec<String>,
    /// Labelled warnings for stderr.
    pub warnings: Vec<String>,
}

impl RunOutcome {
    fn new(violations: bool) -> Self {
        RunOutcome {
            exit_code: if violations { EXIT_VIOLATIONS } else { EXIT_OK },
            files: Vec::new(),
            summary: Vec::new(),
            warnings: Vec::new(),
        }
    }
}
