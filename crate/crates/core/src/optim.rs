//! Heatmap optimization by score-function gradient ascent.
//!
//! The objective for a concrete graph is task utility minus `beta` times the
//! edge count. Over the heatmap distribution the utility term's gradient is
//! estimated from samples: each sampled graph's utility weights the gradient
//! of its sample log-probability, and an L1 subgradient (all ones on the
//! feasible support) carries the sparsity penalty. Each iteration draws a
//! minibatch of task items, samples `N` graphs, evaluates them, and steps
//! the heatmap.
//!
//! Two update parameterizations are provided:
//!
//! - `literal`: the heatmap value itself is squashed, `H <- sigmoid(H + eta*g)`,
//!   then projected onto the structurally valid set (infeasible entries
//!   zeroed). Because the stored probability is re-squashed every step, the
//!   iterates are confined to a narrow band around `sigmoid([0, 1])` for
//!   bounded gradients; entries separate within that band but never
//!   approach 0 or 1.
//! - `logit`: a pre-sigmoid accumulator is kept per support entry,
//!   `L <- L + eta*g` with `H = sigmoid(L)`, which lets entries saturate
//!   toward 0 or 1 as evidence accumulates.

use crate::graph::ConversationGraph;
use crate::heatmap::{
    enumerate_distribution, grad_log_prob, sample_dag, EdgeMatrix, Heatmap, HeatmapError,
    SampledGraph,
};
use crate::seeding::derive_stream_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Clamp for logits derived from user-supplied exact-0/1 heatmap entries.
const LOGIT_CLAMP: f64 = 36.0;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("gradient entry ({row},{col}) is not finite")]
    NonFiniteGradient { row: usize, col: usize },
    #[error("empty sample batch")]
    EmptyBatch,
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error("snapshot sink failed: {0}")]
    Snapshot(String),
    #[error("utility evaluator failed at iteration {iteration}: {source}")]
    Evaluator {
        iteration: usize,
        source: EvaluatorError,
        /// Records completed before the failing iteration.
        partial_records: Vec<RunRecord>,
    },
}

/// Error surfaced by a task utility evaluator.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct EvaluatorError(pub String);

/// Scores a graph on a minibatch of dataset items, in `[0, 1]`.
pub trait UtilityEvaluator {
    fn evaluate(
        &self,
        graph: &ConversationGraph,
        minibatch: &[usize],
    ) -> Result<f64, EvaluatorError>;
}

/// Receives the post-update heatmap each iteration and returns the path
/// recorded in that iteration's [`RunRecord`].
pub trait SnapshotSink {
    fn save(&mut self, iteration: usize, heatmap: &Heatmap) -> Result<String, String>;
}

/// Sink that stores nothing and records empty paths.
pub struct DiscardSnapshots;

impl SnapshotSink for DiscardSnapshots {
    fn save(&mut self, _iteration: usize, _heatmap: &Heatmap) -> Result<String, String> {
        Ok(String::new())
    }
}

/// How heatmap updates are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    #[default]
    Literal,
    Logit,
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    /// Sparsity trade-off weight on the edge penalty.
    pub beta: f64,
    /// Learning rate.
    pub eta: f64,
    /// Number of optimization iterations.
    pub iterations: usize,
    /// Graphs sampled per iteration.
    pub sample_size: usize,
    /// Dataset items per minibatch.
    pub minibatch_size: usize,
    /// Subtract the batch-mean utility from each sample's weight.
    pub baseline_enabled: bool,
    pub parameterization: Parameterization,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            eta: 0.1,
            iterations: 15,
            sample_size: 4,
            minibatch_size: 4,
            baseline_enabled: false,
            parameterization: Parameterization::Literal,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(OptimError::Config(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(OptimError::Config(format!(
                "eta must be finite and > 0, got {}",
                self.eta
            )));
        }
        if self.iterations < 1 {
            return Err(OptimError::Config("iterations must be >= 1".into()));
        }
        if self.sample_size < 1 {
            return Err(OptimError::Config("sample_size must be >= 1".into()));
        }
        if self.minibatch_size < 1 {
            return Err(OptimError::Config("minibatch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One optimization iteration's log entry.
///
/// `mean_utility` and `mean_edges` describe the graphs sampled during the
/// iteration (drawn from the pre-update heatmap); the snapshot path points
/// at the post-update heatmap. The objective estimate is exactly
/// `mean_utility - beta * mean_edges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iteration: usize,
    pub mean_utility: f64,
    pub mean_edges: f64,
    pub objective_estimate: f64,
    pub heatmap_snapshot_path: String,
}

/// Result of a completed optimization.
#[derive(Debug, Clone)]
pub struct OptimizeRun {
    pub heatmap: Heatmap,
    pub records: Vec<RunRecord>,
}

/// Discrete objective for one graph: `utility - beta * edge_count`.
pub fn objective(graph: &ConversationGraph, utility: f64, beta: f64) -> Result<f64, OptimError> {
    if !utility.is_finite() {
        return Err(OptimError::Domain(format!(
            "utility must be finite, got {utility}"
        )));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(OptimError::Domain(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    Ok(utility - beta * graph.edge_count() as f64)
}

/// A sampled graph paired with its measured utility.
#[derive(Debug, Clone)]
pub struct ScoredSample {
    pub sample: SampledGraph,
    pub utility: f64,
}

/// Monte Carlo gradient of the relaxed objective.
///
/// Returns `(1/N) * sum_n w_n * grad_log_prob(G_n) - beta * S`, where `S`
/// is 1 on every feasible entry and 0 elsewhere, and `w_n` is the sample's
/// utility (or utility minus the batch mean when the baseline is enabled,
/// which leaves the estimator's expectation unchanged).
pub fn estimate_gradient(
    heatmap: &Heatmap,
    samples: &[ScoredSample],
    beta: f64,
    baseline_enabled: bool,
) -> Result<EdgeMatrix, OptimError> {
    if samples.is_empty() {
        return Err(OptimError::EmptyBatch);
    }
    let n = samples.len() as f64;
    let baseline = if baseline_enabled {
        samples.iter().map(|s| s.utility).sum::<f64>() / n
    } else {
        0.0
    };
    let mut grad = EdgeMatrix::zeros(heatmap.shape().num_nodes());
    for scored in samples {
        let weight = scored.utility - baseline;
        let sample_grad = grad_log_prob(heatmap, &scored.sample)?;
        for (i, j) in heatmap.support() {
            grad.add(i, j, weight * sample_grad.get(i, j));
        }
    }
    grad.scale(1.0 / n);
    for (i, j) in heatmap.support() {
        grad.add(i, j, -beta);
    }
    Ok(grad)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    if p <= 0.0 {
        -LOGIT_CLAMP
    } else if p >= 1.0 {
        LOGIT_CLAMP
    } else {
        (p / (1.0 - p)).ln().clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }
}

/// One literal update step: support entries become
/// `sigmoid(H[i,j] + eta * gradient[i,j])`; infeasible entries are projected
/// back to exactly zero. Support entries of the result are strictly inside
/// `(0, 1)`.
pub fn update_heatmap(
    heatmap: &Heatmap,
    gradient: &EdgeMatrix,
    eta: f64,
) -> Result<Heatmap, OptimError> {
    if !(eta.is_finite()) {
        return Err(OptimError::Domain(format!("eta must be finite, got {eta}")));
    }
    let n = heatmap.shape().num_nodes();
    let mut values = vec![0.0; n * n];
    for (i, j) in heatmap.support() {
        let g = gradient.get(i, j);
        if !g.is_finite() {
            return Err(OptimError::NonFiniteGradient { row: i, col: j });
        }
        values[i * n + j] = sigmoid(heatmap.get(i, j) + eta * g);
    }
    Ok(Heatmap::from_values(heatmap.shape(), values)?)
}

/// Runs the full optimization loop.
///
/// Each iteration `m` (1-based): draw a minibatch of `minibatch_size` item
/// indices from `[0, dataset_len)` (uniform without replacement, reshuffled
/// every epoch), draw `sample_size` graphs from the current heatmap with
/// per-sample streams derived from `(seed, m, n)`, evaluate each graph's
/// utility on the minibatch, form the gradient estimate, update the
/// heatmap, snapshot it, and append a [`RunRecord`]. Fully deterministic
/// given `seed` and a deterministic evaluator.
///
/// An evaluator failure aborts the run and surfaces the error together with
/// the records of the iterations that completed.
pub fn optimize(
    initial: &Heatmap,
    evaluator: &dyn UtilityEvaluator,
    dataset_len: usize,
    config: &ObjectiveConfig,
    seed: u64,
    sink: &mut dyn SnapshotSink,
) -> Result<OptimizeRun, OptimError> {
    config.validate()?;
    if dataset_len == 0 {
        return Err(OptimError::Domain("dataset must be nonempty".into()));
    }
    let mut minibatch_rng =
        ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, 0x6D69_6E69, 0));
    let mut epoch: Vec<usize> = Vec::new();
    let batch_size = config.minibatch_size.min(dataset_len);

    let mut heatmap = initial.clone();
    // Logit mode keeps a pre-sigmoid accumulator per support entry.
    let mut logits: Vec<f64> = match config.parameterization {
        Parameterization::Literal => Vec::new(),
        Parameterization::Logit => initial.support().map(|(i, j)| logit(initial.get(i, j))).collect(),
    };

    let mut records: Vec<RunRecord> = Vec::with_capacity(config.iterations);
    for m in 1..=config.iterations {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if epoch.is_empty() {
                epoch = (0..dataset_len).collect();
                epoch.shuffle(&mut minibatch_rng);
            }
            batch.push(epoch.pop().expect("epoch refilled above"));
        }

        let mut scored = Vec::with_capacity(config.sample_size);
        for n in 0..config.sample_size {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, m as u64, n as u64));
            let sample = sample_dag(&heatmap, &mut rng);
            let utility = evaluator
                .evaluate(&sample.graph, &batch)
                .map_err(|source| OptimError::Evaluator {
                    iteration: m,
                    source,
                    partial_records: records.clone(),
                })?;
            scored.push(ScoredSample { sample, utility });
        }

        let grad = estimate_gradient(&heatmap, &scored, config.beta, config.baseline_enabled)?;
        heatmap = match config.parameterization {
            Parameterization::Literal => update_heatmap(&heatmap, &grad, config.eta)?,
            Parameterization::Logit => {
                let n = heatmap.shape().num_nodes();
                let mut values = vec![0.0; n * n];
                for (slot, (i, j)) in heatmap.support().enumerate() {
                    let g = grad.get(i, j);
                    if !g.is_finite() {
                        return Err(OptimError::NonFiniteGradient { row: i, col: j });
                    }
                    logits[slot] += config.eta * g;
                    values[i * n + j] = sigmoid(logits[slot]);
                }
                Heatmap::from_values(heatmap.shape(), values)?
            }
        };

        let count = scored.len() as f64;
        let mean_utility = scored.iter().map(|s| s.utility).sum::<f64>() / count;
        let mean_edges = scored
            .iter()
            .map(|s| s.sample.graph.edge_count() as f64)
            .sum::<f64>()
            / count;
        let heatmap_snapshot_path = sink.save(m, &heatmap).map_err(OptimError::Snapshot)?;
        records.push(RunRecord {
            iteration: m,
            mean_utility,
            mean_edges,
            objective_estimate: mean_utility - config.beta * mean_edges,
            heatmap_snapshot_path,
        });
    }
    Ok(OptimizeRun { heatmap, records })
}

/// Exact relaxed objective by exhaustive enumeration: the expectation over
/// the heatmap's graph distribution of `utility - beta * edge_count`,
/// evaluated on the given item indices (usually the full dataset).
pub fn exact_objective(
    heatmap: &Heatmap,
    evaluator: &dyn UtilityEvaluator,
    items: &[usize],
    beta: f64,
) -> Result<f64, OptimError> {
    let mut total = 0.0;
    for (graph, p) in enumerate_distribution(heatmap)? {
        let utility = evaluator
            .evaluate(&graph, items)
            .map_err(|source| OptimError::Evaluator {
                iteration: 0,
                source,
                partial_records: Vec::new(),
            })?;
        total += p * (utility - beta * graph.edge_count() as f64);
    }
    Ok(total)
}
