//! Command-line front end for jcglasso: ingestion, fitting, path selection,
//! simulation and benchmarking.

use std::fmt;

pub mod commands;
pub mod config;
pub mod io;
pub mod output;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Input(String),
    Convergence(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Convergence(m) => write!(f, "convergence failure: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<jcglasso::Error> for CliError {
    fn from(e: jcglasso::Error) -> Self {
        use jcglasso::Error as E;
        match e {
            E::NoConvergence { .. } => CliError::Convergence(e.to_string()),
            E::ConditioningFailure { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}
