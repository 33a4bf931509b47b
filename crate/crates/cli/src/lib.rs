//! Batch front end: simulation tables, fitting on CSV data, prediction.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod report;

use std::fmt;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Input = 1,
    PartialFailure = 2,
    NonConvergence = 3,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Input,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<itr_core::Error> for CliError {
    fn from(e: itr_core::Error) -> Self {
        if e.is_convergence_failure() {
            CliError {
                exit: Exit::NonConvergence,
                message: format!(
                    "{e}\nhint: the solver did not converge. Bigger samples, fewer candidate \
                     tailoring variables or a penalized method (PDR_ridge) usually help."
                ),
            }
        } else {
            CliError::input(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
