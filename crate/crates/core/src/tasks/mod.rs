//! Task datasets, utility scoring, synthetic oracles, and agent backends.
//!
//! Scoring rules are frozen so the utility signal feeding the optimizer is
//! stable: multiple choice takes the first standalone option letter, numeric
//! answers take the last number with canonical formatting, and code takes
//! the first fenced block run against the item's tests. The golden-edge
//! task is a synthetic utility whose optimal topology is known by
//! construction, which makes optimizer behavior checkable without any
//! model backend.

pub mod backends;
pub mod dataset;
pub mod golden;
pub mod llm;
pub mod sandbox;
pub mod scoring;

pub use backends::{EchoBackend, ScriptedBackend};
pub use dataset::{load_dataset, parse_dataset, DatasetError, TaskItem, TaskKind};
pub use golden::GoldenEdgeTask;
pub use llm::{LlmClient, LlmConfig, LlmError};
pub use sandbox::{CodeSandbox, ProcessSandbox, SandboxError};
pub use scoring::{
    extract_choice_letter, extract_code_block, extract_last_number, normalize_choice_answer,
    normalize_numeric_answer, score_code, score_multiple_choice, score_numeric, TranscriptScorer,
};
