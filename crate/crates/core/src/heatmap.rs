//! Probabilistic edge heatmaps and cycle-safe DAG sampling.
//!
//! The heatmap `H` is the continuous relaxation of a conversation graph's
//! adjacency matrix: `H[i,j]` is the probability that edge `i->j` is
//! included. Infeasible entries are pinned to exactly zero, which defines
//! the structurally valid set.
//!
//! Sampling walks the feasible entries in a fixed row-major order and draws
//! each edge from `Bernoulli(H[i,j])`, but only when adding the edge to the
//! edges accepted so far would not close a directed cycle; edges that would
//! close a cycle are skipped outright, with no draw and no probability
//! term. The log-probability of the realized decision sequence is summed
//! exactly along the way. Because the visit order is fixed, each reachable
//! graph corresponds to exactly one decision sequence, so the sequence
//! probability is the graph probability, and small instances can be
//! enumerated exhaustively as an exact oracle.

use crate::graph::{ConversationGraph, FeasibilityMask, GraphError, GraphShape};
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

/// Feasible-edge cap for exhaustive enumeration.
pub const ENUMERATION_EDGE_LIMIT: usize = 20;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("heatmap entry ({row},{col}) = {value} is invalid: {reason}")]
    InvalidEntry {
        row: usize,
        col: usize,
        value: f64,
        reason: &'static str,
    },
    #[error("heatmap has {actual} entries, expected {expected}x{expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{count} feasible edges exceed the enumeration limit of {limit}")]
    TooManyEdges { count: usize, limit: usize },
    #[error("sample is inconsistent with this heatmap: {0}")]
    InconsistentSample(String),
}

/// Dense row-major real matrix over node pairs; used for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMatrix {
    num_nodes: usize,
    data: Vec<f64>,
}

impl EdgeMatrix {
    pub fn zeros(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            data: vec![0.0; num_nodes * num_nodes],
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.num_nodes + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.num_nodes + col] = value;
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.num_nodes + col] += value;
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }
}

/// Edge-probability matrix restricted to the feasible support.
///
/// Entries sit in `[0, 1]` on the support and are exactly `0` elsewhere.
/// Optimizer updates squash through a sigmoid, so optimizer-produced
/// heatmaps have support entries strictly inside `(0, 1)`; exact `0` or `1`
/// support entries can only come from user-supplied initial heatmaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    shape: GraphShape,
    mask: FeasibilityMask,
    values: Vec<f64>,
}

impl Heatmap {
    /// Heatmap with probability `p` on every feasible entry.
    pub fn uniform(shape: GraphShape, p: f64) -> Result<Self, HeatmapError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(HeatmapError::InvalidEntry {
                row: 0,
                col: 0,
                value: p,
                reason: "probability must lie in [0, 1]",
            });
        }
        let mask = FeasibilityMask::build(shape);
        let n = shape.num_nodes();
        let mut values = vec![0.0; n * n];
        for (i, j) in mask.allowed_pairs() {
            values[i * n + j] = p;
        }
        Ok(Self {
            shape,
            mask,
            values,
        })
    }

    /// Builds a heatmap from a full row-major matrix, checking that every
    /// entry is finite and in `[0, 1]` and that infeasible entries are
    /// exactly zero.
    pub fn from_values(shape: GraphShape, values: Vec<f64>) -> Result<Self, HeatmapError> {
        let n = shape.num_nodes();
        if values.len() != n * n {
            return Err(HeatmapError::DimensionMismatch {
                expected: n,
                actual: values.len(),
            });
        }
        let mask = FeasibilityMask::build(shape);
        for i in 0..n {
            for j in 0..n {
                let v = values[i * n + j];
                if !v.is_finite() {
                    return Err(HeatmapError::InvalidEntry {
                        row: i,
                        col: j,
                        value: v,
                        reason: "entry is not finite",
                    });
                }
                if mask.allowed(i, j) {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(HeatmapError::InvalidEntry {
                            row: i,
                            col: j,
                            value: v,
                            reason: "support entry outside [0, 1]",
                        });
                    }
                } else if v != 0.0 {
                    return Err(HeatmapError::InvalidEntry {
                        row: i,
                        col: j,
                        value: v,
                        reason: "infeasible entry must be exactly 0",
                    });
                }
            }
        }
        Ok(Self {
            shape,
            mask,
            values,
        })
    }

    pub fn shape(&self) -> GraphShape {
        self.shape
    }

    pub fn mask(&self) -> &FeasibilityMask {
        &self.mask
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.shape.num_nodes() + col]
    }

    /// Feasible `(row, col)` pairs in the fixed sampling order (row-major).
    pub fn support(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask.allowed_pairs()
    }

    pub fn support_len(&self) -> usize {
        self.mask.count_allowed()
    }

    /// Serializes to CSV with the graph header convention and nine
    /// significant digits per entry.
    pub fn to_csv(&self) -> String {
        let n = self.shape.num_nodes();
        let mut out = format!(
            "# shape K={} T={}\n",
            self.shape.num_agents(),
            self.shape.num_rounds()
        );
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{:.8e}", self.values[i * n + j]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, HeatmapError> {
        let (shape, values) = crate::graph::parse_matrix_csv(text, |field, line| {
            field.parse::<f64>().map_err(|e| GraphError::Parse {
                line,
                message: format!("bad real {field:?}: {e}"),
            })
        })?;
        Self::from_values(shape, values)
    }
}

/// What happened to one feasible edge during sampling, in support order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDecision {
    /// Bernoulli draw succeeded; edge is in the graph.
    Included,
    /// Bernoulli draw failed; edge is absent.
    Excluded,
    /// Adding the edge would have closed a cycle; no draw was made.
    Skipped,
}

/// A graph drawn from a heatmap together with its exact log-probability and
/// the per-edge decision record captured during sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    pub graph: ConversationGraph,
    pub log_prob: f64,
    decisions: Vec<EdgeDecision>,
}

impl SampledGraph {
    /// Per-edge decisions aligned with [`Heatmap::support`] order.
    pub fn decisions(&self) -> &[EdgeDecision] {
        &self.decisions
    }
}

/// Transitive reachability over accepted edges, updated incrementally.
struct Reachability {
    n: usize,
    // reach[u*n + v] == true iff v is reachable from u via a nonempty path.
    reach: Vec<bool>,
}

impl Reachability {
    fn new(n: usize) -> Self {
        Self {
            n,
            reach: vec![false; n * n],
        }
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        self.reach[from * self.n + to]
    }

    /// Records edge `i -> j`: everything reaching `i` (plus `i`) now reaches
    /// everything reachable from `j` (plus `j`).
    fn add_edge(&mut self, i: usize, j: usize) {
        let sources: Vec<usize> = (0..self.n)
            .filter(|&u| u == i || self.reaches(u, i))
            .collect();
        let targets: Vec<usize> = (0..self.n)
            .filter(|&v| v == j || self.reaches(j, v))
            .collect();
        for &u in &sources {
            for &v in &targets {
                self.reach[u * self.n + v] = true;
            }
        }
    }
}

/// Draws one DAG from the heatmap.
///
/// Feasible edges are visited in row-major order. An edge whose addition
/// would close a cycle against the edges accepted so far is skipped with no
/// Bernoulli draw and no log-probability term; every other edge consumes
/// one uniform draw and contributes `ln H[i,j]` when included or
/// `ln (1 - H[i,j])` when excluded. Deterministic given the RNG state.
pub fn sample_dag(heatmap: &Heatmap, rng: &mut impl Rng) -> SampledGraph {
    let n = heatmap.shape().num_nodes();
    let mut adj = vec![false; n * n];
    let mut reach = Reachability::new(n);
    let mut log_prob = 0.0;
    let mut decisions = Vec::with_capacity(heatmap.support_len());
    for (i, j) in heatmap.support() {
        if reach.reaches(j, i) {
            decisions.push(EdgeDecision::Skipped);
            continue;
        }
        let h = heatmap.get(i, j);
        // u in [0,1): h == 0 can never include, h == 1 always includes.
        let include = rng.random::<f64>() < h;
        if include {
            adj[i * n + j] = true;
            reach.add_edge(i, j);
            log_prob += h.ln();
            decisions.push(EdgeDecision::Included);
        } else {
            log_prob += (1.0 - h).ln();
            decisions.push(EdgeDecision::Excluded);
        }
    }
    SampledGraph {
        graph: ConversationGraph::from_raw_parts(heatmap.shape(), adj),
        log_prob,
        decisions,
    }
}

/// Exhaustively enumerates every graph the sampler can produce, with its
/// exact probability. Zero-probability branches are pruned, so degenerate
/// entries (exact 0 or 1) collapse to their forced outcome. Results are
/// keyed by adjacency and returned in a deterministic order; probabilities
/// sum to 1 up to accumulated rounding.
pub fn enumerate_distribution(
    heatmap: &Heatmap,
) -> Result<Vec<(ConversationGraph, f64)>, HeatmapError> {
    let support: Vec<(usize, usize)> = heatmap.support().collect();
    if support.len() > ENUMERATION_EDGE_LIMIT {
        return Err(HeatmapError::TooManyEdges {
            count: support.len(),
            limit: ENUMERATION_EDGE_LIMIT,
        });
    }
    let n = heatmap.shape().num_nodes();
    let mut outcomes: BTreeMap<Vec<bool>, f64> = BTreeMap::new();
    let mut adj = vec![false; n * n];
    visit(
        heatmap,
        &support,
        0,
        1.0,
        &mut adj,
        &Reachability::new(n),
        &mut outcomes,
    );
    Ok(outcomes
        .into_iter()
        .map(|(adj, p)| (ConversationGraph::from_raw_parts(heatmap.shape(), adj), p))
        .collect())
}

fn visit(
    heatmap: &Heatmap,
    support: &[(usize, usize)],
    idx: usize,
    prob: f64,
    adj: &mut Vec<bool>,
    reach: &Reachability,
    outcomes: &mut BTreeMap<Vec<bool>, f64>,
) {
    if idx == support.len() {
        *outcomes.entry(adj.clone()).or_insert(0.0) += prob;
        return;
    }
    let (i, j) = support[idx];
    if reach.reaches(j, i) {
        visit(heatmap, support, idx + 1, prob, adj, reach, outcomes);
        return;
    }
    let h = heatmap.get(i, j);
    let n = heatmap.shape().num_nodes();
    if h < 1.0 {
        visit(heatmap, support, idx + 1, prob * (1.0 - h), adj, reach, outcomes);
    }
    if h > 0.0 {
        adj[i * n + j] = true;
        let mut included_reach = Reachability {
            n: reach.n,
            reach: reach.reach.clone(),
        };
        included_reach.add_edge(i, j);
        visit(
            heatmap,
            support,
            idx + 1,
            prob * h,
            adj,
            &included_reach,
            outcomes,
        );
        adj[i * n + j] = false;
    }
}

/// Exact expected edge count under the heatmap, by enumeration.
pub fn expected_edge_count(heatmap: &Heatmap) -> Result<f64, HeatmapError> {
    Ok(enumerate_distribution(heatmap)?
        .iter()
        .map(|(g, p)| p * g.edge_count() as f64)
        .sum())
}

/// Gradient of the sample's log-probability with respect to the heatmap.
///
/// Entry `(i, j)` is `1 / H[i,j]` for an included edge, `-1 / (1 - H[i,j])`
/// for an excluded edge, and `0` for skipped or infeasible entries. The
/// decision record must come from sampling under this heatmap; an included
/// edge at probability 0 or an excluded edge at probability 1 is reported
/// as an inconsistency.
pub fn grad_log_prob(
    heatmap: &Heatmap,
    sampled: &SampledGraph,
) -> Result<EdgeMatrix, HeatmapError> {
    if sampled.decisions.len() != heatmap.support_len() {
        return Err(HeatmapError::InconsistentSample(format!(
            "decision record covers {} edges, heatmap support has {}",
            sampled.decisions.len(),
            heatmap.support_len()
        )));
    }
    let mut grad = EdgeMatrix::zeros(heatmap.shape().num_nodes());
    for ((i, j), decision) in heatmap.support().zip(sampled.decisions.iter()) {
        let h = heatmap.get(i, j);
        match decision {
            EdgeDecision::Included => {
                if h == 0.0 {
                    return Err(HeatmapError::InconsistentSample(format!(
                        "edge ({i},{j}) included at probability 0"
                    )));
                }
                grad.set(i, j, 1.0 / h);
            }
            EdgeDecision::Excluded => {
                if h == 1.0 {
                    return Err(HeatmapError::InconsistentSample(format!(
                        "edge ({i},{j}) excluded at probability 1"
                    )));
                }
                grad.set(i, j, -1.0 / (1.0 - h));
            }
            EdgeDecision::Skipped => {}
        }
    }
    Ok(grad)
}
