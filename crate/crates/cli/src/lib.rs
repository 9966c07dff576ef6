//! Library side of the `schmidt` command-line tool.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric or continuity
//! failure, 4 invariant failure (`check`), 1 output I/O failure.

pub mod check;
pub mod config;
pub mod output;
pub mod run;
pub mod sweep;

use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(schmidt_core::Error),

    /// A pipeline stage failed; `stage` is one of propagate, track, energetics.
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: schmidt_core::Error },

    #[error("invariant check failed: {0}")]
    Invariant(String),

    #[error("cannot write {path}: {reason}")]
    Output { path: String, reason: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { source, .. } if source.is_config_error() => 2,
            CliError::Stage { .. } => 3,
            CliError::Invariant(_) => 4,
            CliError::Output { .. } => 1,
        }
    }
}
