//! Command-line front end for trimode-core: configuration, observation
//! ingestion, and the spectrum, chi, decoherence, fit and validate commands.

pub mod commands;
pub mod config;
pub mod observations;
pub mod output;

use std::fmt;

use trimode_core::Error;

/// Exit codes: 0 success, 1 input error, 2 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Io(String),
    Numerical(Error),
    /// Validation ran but at least one property failed.
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) | CliError::ChecksFailed(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::ChecksFailed(n) => write!(f, "{n} validation check(s) failed"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match root(&e) {
            Error::InvalidParameter { .. } | Error::InvalidObservations(_) | Error::NotPositiveDefinite => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Numerical(e),
        }
    }
}

fn root(e: &Error) -> &Error {
    match e {
        Error::AtFlux { source, .. } | Error::AtObservation { source, .. } => root(source),
        other => other,
    }
}
