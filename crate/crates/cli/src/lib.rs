//! Orchestration layer: resolves run configuration, binds role presets and
//! backends, and drives optimization and evaluation runs that emit a
//! reproducible artifact tree (config echo, per-iteration heatmap
//! snapshots, a JSONL run log, the final heatmap, the best sampled graph,
//! and per-task transcripts).

pub mod config;
pub mod presets;
pub mod runner;

pub use config::{
    AggregationChoice, BackendChoice, CodeSandboxConfig, Overrides, ResolvedRun, RunConfig,
    SyntheticTaskConfig,
};
pub use presets::{objective_for_kind, preset_roles};
pub use runner::{run_eval, run_mask, run_optimize, run_sample, EvalArtifact, EvalSummary};

use std::fmt;

/// CLI error split by exit code: configuration and input validation
/// problems exit 2, runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
