//! Configuration, orchestration and file output for the `polaron` binary.

pub mod config;
pub mod output;
pub mod runner;

use polaron_core::experiments::ExperimentError;
use polaron_core::gme::GmeError;
use thiserror::Error;

pub use config::{Experiment, RunConfig};
pub use output::{write_outputs, OutputOptions};
pub use runner::{execute, Outcome};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments.
    #[error("{0}")]
    Validation(String),
    /// A solver invariant or convergence check failed.
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Model(_) | ExperimentError::DriftTimeBeyondRun { .. } => {
                CliError::Validation(e.to_string())
            }
            ExperimentError::Gme(
                GmeError::BadStep(_)
                | GmeError::BadDuration(_)
                | GmeError::BadLattice(_)
                | GmeError::KernelResolution { .. },
            ) => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
