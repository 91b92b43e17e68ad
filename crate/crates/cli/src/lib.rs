//! Batch driver: solve and cache Maass forms, run restriction sweeps and the
//! verification suite.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("no cached Maass forms in {}; run `hyperperiods solve --cache {}` first", .0.display(), .0.display())]
    MissingCache(PathBuf),
    #[error("{failed} of {total} brackets failed to solve")]
    SolveFailed { failed: usize, total: usize },
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error(transparent)]
    Core(#[from] hyperperiods::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit status: 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingCache(_) => 2,
            _ => 1,
        }
    }
}
