//! Experiment runner and verification front-end for `graph-approx`.
//!
//! The binary is a thin wrapper over [`run`]; the suites and experiments are
//! exposed as library functions so tests can call them with custom sizes.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
pub mod suites;
pub mod svg;

use thiserror::Error;

pub use commands::{run, Cli, Command, CommonArgs};

/// Library version written into every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("computation failed: {0}")]
    Compute(String),
}

impl CliError {
    /// Process exit code: 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Compute(_) => 1,
        }
    }
}

macro_rules! compute_error {
    ($($source:ty),*) => {
        $(impl From<$source> for CliError {
            fn from(e: $source) -> Self {
                CliError::Compute(e.to_string())
            }
        })*
    };
}

compute_error!(
    graph_approx::bounds::BoundsError,
    graph_approx::gcn::GcnError,
    graph_approx::smoothness::SmoothnessError,
    graph_approx::synth::SynthError,
    graph_approx::SpectralError,
    graph_approx::GraphError
);
