//! Front end for `dncs-core`: JSON scenarios in, JSON reports out.
//!
//! Exit codes are stable: see [`exit`].

pub mod commands;
pub mod report;
pub mod scenario;
pub mod trace;

use std::path::Path;

pub use commands::{run, Command, Outcome};
pub use scenario::{load_scenario, parse_scenario, Overrides, Scenario};

pub mod exit {
    pub const OK: u8 = 0;
    pub const USAGE: u8 = 1;
    /// Unreadable, malformed or inconsistent scenario.
    pub const INPUT: u8 = 2;
    /// Infeasible drop probabilities or a diverged solve.
    pub const INFEASIBLE: u8 = 3;
    /// Numerical failure, a failed verification check, or an unwritable
    /// output.
    pub const NUMERIC: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numeric(#[from] dncs_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Parse { .. } | CliError::Read { .. } | CliError::Validation { .. } => {
                exit::INPUT
            }
            CliError::Write { .. } | CliError::Numeric(_) => exit::NUMERIC,
        }
    }
}

/// Loads the scenario, applies overrides and runs one command.
pub fn execute(
    cmd: Command,
    scenario: Option<&Path>,
    overrides: &Overrides,
    trace: Option<&Path>,
) -> Result<Outcome, CliError> {
    let path = scenario.ok_or_else(|| CliError::Usage("--scenario PATH is required".into()))?;
    let mut sc = load_scenario(path)?;
    sc.apply(overrides)?;
    run(cmd, &sc, trace)
}
