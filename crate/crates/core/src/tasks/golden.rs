//! Synthetic task with a known optimal topology.
//!
//! Utility rewards each edge of a fixed "golden" set and penalizes every
//! other edge, clamped to [0, 1]. With zero noise and positive reward and
//! penalty, the golden set is the utility's unique maximizer as long as
//! hitting the full set is needed to reach the clamp ceiling, which makes
//! this the oracle for optimizer acceptance checks.

use crate::graph::{ConversationGraph, FeasibilityMask, GraphError, GraphShape};
use crate::optim::{EvaluatorError, UtilityEvaluator};
use crate::seeding::{derive_stream_seed, fnv1a};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Golden-edge utility: `clamp01(reward * |E ∩ golden| - penalty * |E \ golden| + noise)`.
///
/// Noise is uniform in `[-noise_scale, noise_scale]`, drawn from a stream
/// derived from the task seed and the graph's adjacency fingerprint, so
/// evaluation is a pure function of (task, graph).
#[derive(Debug, Clone)]
pub struct GoldenEdgeTask {
    shape: GraphShape,
    golden_edges: BTreeSet<(usize, usize)>,
    reward_per_edge: f64,
    penalty_per_extra_edge: f64,
    noise_scale: f64,
    seed: u64,
}

impl GoldenEdgeTask {
    pub fn new(
        shape: GraphShape,
        golden_edges: &[(usize, usize)],
        reward_per_edge: f64,
        penalty_per_extra_edge: f64,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self, GraphError> {
        let mask = FeasibilityMask::build(shape);
        for &(i, j) in golden_edges {
            if i >= shape.num_nodes() || j >= shape.num_nodes() {
                return Err(GraphError::NodeOutOfRange {
                    index: i.max(j),
                    num_nodes: shape.num_nodes(),
                });
            }
            if !mask.allowed(i, j) {
                return Err(GraphError::InfeasibleEdge { from: i, to: j });
            }
        }
        Ok(Self {
            shape,
            golden_edges: golden_edges.iter().copied().collect(),
            reward_per_edge,
            penalty_per_extra_edge,
            noise_scale,
            seed,
        })
    }

    pub fn shape(&self) -> GraphShape {
        self.shape
    }

    pub fn golden_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.golden_edges.iter().copied()
    }

    pub fn is_golden(&self, from: usize, to: usize) -> bool {
        self.golden_edges.contains(&(from, to))
    }

    pub fn utility(&self, graph: &ConversationGraph) -> f64 {
        let mut matched = 0usize;
        let mut extra = 0usize;
        for (from, to) in graph.edges() {
            if self.golden_edges.contains(&(from.index(), to.index())) {
                matched += 1;
            } else {
                extra += 1;
            }
        }
        let mut value = self.reward_per_edge * matched as f64
            - self.penalty_per_extra_edge * extra as f64;
        if self.noise_scale > 0.0 {
            let fingerprint = fnv1a(
                graph
                    .edges()
                    .iter()
                    .flat_map(|(a, b)| [a.index() as u8, b.index() as u8]),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(self.seed, fingerprint, 0));
            value += (rng.random::<f64>() * 2.0 - 1.0) * self.noise_scale;
        }
        value.clamp(0.0, 1.0)
    }
}

impl UtilityEvaluator for GoldenEdgeTask {
    fn evaluate(&self, graph: &ConversationGraph, _: &[usize]) -> Result<f64, EvaluatorError> {
        Ok(self.utility(graph))
    }
}
