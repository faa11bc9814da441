//! Self-optimizing conversation topologies for multi-agent systems.
//!
//! A multi-round dialogue among `K` agents over `T` rounds is modeled as a
//! directed acyclic graph on `T*K` agent-instance nodes. Which edges exist is
//! governed by a probabilistic heatmap; graphs are sampled from the heatmap,
//! executed as agent workflows, scored by a task utility, and the heatmap is
//! improved by a score-function (REINFORCE) gradient step with an L1 edge
//! penalty that discourages conversation overhead.
//!
//! Module map:
//! - [`graph`]: graph shapes, feasibility constraints, DAG validation,
//!   topological workflows, CSV serialization.
//! - [`heatmap`]: the edge-probability heatmap, cycle-safe Bernoulli sampling
//!   with exact log-probability accounting, an exact enumeration oracle, and
//!   the score-function gradient of a sample.
//! - [`optim`]: the utility-minus-edge-penalty objective, gradient estimation,
//!   heatmap updates, and the full iterative optimization loop.
//! - [`exec`]: agent and system specifications, workflow execution, message
//!   routing, aggregation, and token accounting.
//! - [`tasks`]: task datasets, answer scoring, synthetic oracle tasks,
//!   deterministic test backends, and a chat-completion HTTP client.

pub mod exec;
pub mod graph;
pub mod heatmap;
pub mod optim;
pub mod seeding;
pub mod tasks;

pub use exec::{
    execute, AgentBackend, AgentSpec, AggregationMode, BackendError, BackendRequest,
    BackendResponse, ExecError, ExecOptions, MasSpec, Message, Transcript,
};
pub use graph::{ConversationGraph, FeasibilityMask, GraphError, GraphShape, NodeId};
pub use heatmap::{
    enumerate_distribution, expected_edge_count, grad_log_prob, sample_dag, EdgeDecision,
    EdgeMatrix, Heatmap, HeatmapError, SampledGraph,
};
pub use optim::{
    estimate_gradient, exact_objective, objective, optimize, update_heatmap, EvaluatorError,
    ObjectiveConfig, OptimError, OptimizeRun, Parameterization, RunRecord, SnapshotSink,
    UtilityEvaluator,
};
