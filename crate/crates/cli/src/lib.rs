//! Scenario configuration, execution and file output for the `optosq` binary.
//!
//! The library half exists so that the acceptance and integration tests can
//! drive exactly the code paths the binary uses.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod derive;
pub mod output;
pub mod run;

use std::path::PathBuf;

pub use config::ScenarioConfig;

/// The scenario bundled with the binary: the reference parameter set at zero
/// temperature with a 0/20/50 temperature sweep.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.json");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Run(#[from] optosq::Error),

    #[error("invariant check failed: {0}")]
    Invariant(String),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 2 for configuration problems, 3 for integration
    /// failures, 4 for invariant violations, 1 for output errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(optosq::Error::Quality { .. }) => 4,
            CliError::Run(optosq::Error::InvalidParameter { .. }) => 2,
            CliError::Run(_) => 3,
            CliError::Invariant(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
