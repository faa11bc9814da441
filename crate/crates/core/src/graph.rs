//! Conversation graphs over agent-instance nodes.
//!
//! A dialogue among `K` agents across `T` rounds induces `T*K` nodes; node
//! `i` is agent `i mod K` speaking in round `i / K` (0-based). Edges carry
//! messages forward. Three structural rules keep the conversation causal:
//! no self-loops, no edges into an earlier round, and no edges that skip
//! more than one round ahead. On top of feasibility, the whole graph must
//! be acyclic so a topological workflow exists.

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use thiserror::Error;

/// Errors from graph construction, validation, and serialization.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid shape: num_agents={num_agents}, num_rounds={num_rounds} (both must be >= 1)")]
    InvalidShape { num_agents: usize, num_rounds: usize },
    #[error("adjacency dimension mismatch: expected {expected}x{expected}, got {actual} entries")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    #[error("edge {from}->{to} violates the feasibility constraints")]
    InfeasibleEdge { from: usize, to: usize },
    #[error("graph contains a cycle")]
    CycleDetected,
    #[error("csv parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Dimensions of a conversation graph: `K` agents per round, `T` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphShape {
    num_agents: usize,
    num_rounds: usize,
}

impl GraphShape {
    pub fn new(num_agents: usize, num_rounds: usize) -> Result<Self, GraphError> {
        if num_agents < 1 || num_rounds < 1 {
            return Err(GraphError::InvalidShape {
                num_agents,
                num_rounds,
            });
        }
        Ok(Self {
            num_agents,
            num_rounds,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_rounds(&self) -> usize {
        self.num_rounds
    }

    pub fn num_nodes(&self) -> usize {
        self.num_agents * self.num_rounds
    }

    /// Dialogue round of a node (0-based).
    pub fn round_of(&self, node: NodeId) -> usize {
        node.index() / self.num_agents
    }

    /// Agent slot of a node within its round (0-based).
    pub fn agent_of(&self, node: NodeId) -> usize {
        node.index() % self.num_agents
    }

    /// Node for a given (round, agent) pair.
    pub fn node_at(&self, round: usize, agent: usize) -> NodeId {
        debug_assert!(round < self.num_rounds && agent < self.num_agents);
        NodeId(round * self.num_agents + agent)
    }

    /// All nodes in index order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.num_nodes()).map(NodeId)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.index() < self.num_nodes()
    }
}

/// Index of an agent-instance node, in `[0, T*K)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(usize);

impl NodeId {
    pub fn new(index: usize) -> Self {
        NodeId(index)
    }

    pub fn index(&self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Which directed edges are structurally permitted for a shape.
///
/// An entry `(i, j)` is allowed iff `i != j`, node `i` is not in a later
/// round than `j`, and `j` is at most one round after `i`. The number of
/// allowed entries is `T*K*(K-1) + (T-1)*K^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibilityMask {
    shape: GraphShape,
    allowed: Vec<bool>,
}

impl FeasibilityMask {
    /// Builds the mask for a shape. Deterministic.
    pub fn build(shape: GraphShape) -> Self {
        let n = shape.num_nodes();
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            let ri = i / shape.num_agents();
            for j in 0..n {
                if i == j {
                    continue;
                }
                let rj = j / shape.num_agents();
                if ri > rj || rj - ri > 1 {
                    continue;
                }
                allowed[i * n + j] = true;
            }
        }
        Self { shape, allowed }
    }

    pub fn shape(&self) -> GraphShape {
        self.shape
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.shape.num_nodes() + to]
    }

    /// Number of allowed entries.
    pub fn count_allowed(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    /// Allowed `(from, to)` pairs in row-major order.
    pub fn allowed_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.shape.num_nodes();
        self.allowed
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(move |(idx, _)| (idx / n, idx % n))
    }
}

/// A directed conversation graph: boolean adjacency over `T*K` nodes.
///
/// A well-formed graph has only feasible edges and no directed cycles;
/// [`ConversationGraph::is_valid_dag`] checks both. The validating
/// constructors ([`from_edges`](Self::from_edges), [`from_csv`](Self::from_csv))
/// reject ill-formed inputs, while
/// [`from_adjacency_unchecked`](Self::from_adjacency_unchecked) admits any
/// 0/1 matrix of the right dimension so that validity checks have something
/// to reject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConversationGraph {
    shape: GraphShape,
    adj: Vec<bool>,
}

impl ConversationGraph {
    /// Graph with no edges.
    pub fn empty(shape: GraphShape) -> Self {
        let n = shape.num_nodes();
        Self {
            shape,
            adj: vec![false; n * n],
        }
    }

    /// Builds a graph from an edge list, rejecting infeasible edges and cycles.
    pub fn from_edges(shape: GraphShape, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mask = FeasibilityMask::build(shape);
        let n = shape.num_nodes();
        let mut graph = Self::empty(shape);
        for &(from, to) in edges {
            if from >= n {
                return Err(GraphError::NodeOutOfRange {
                    index: from,
                    num_nodes: n,
                });
            }
            if to >= n {
                return Err(GraphError::NodeOutOfRange {
                    index: to,
                    num_nodes: n,
                });
            }
            if !mask.allowed(from, to) {
                return Err(GraphError::InfeasibleEdge { from, to });
            }
            graph.adj[from * n + to] = true;
        }
        if !graph.is_acyclic() {
            return Err(GraphError::CycleDetected);
        }
        Ok(graph)
    }

    /// Wraps a raw row-major adjacency without feasibility or cycle checks.
    ///
    /// Only the dimension is verified. Use this to materialize a candidate
    /// matrix that [`is_valid_dag`](Self::is_valid_dag) will then judge.
    pub fn from_adjacency_unchecked(
        shape: GraphShape,
        adjacency: Vec<bool>,
    ) -> Result<Self, GraphError> {
        let n = shape.num_nodes();
        if adjacency.len() != n * n {
            return Err(GraphError::DimensionMismatch {
                expected: n,
                actual: adjacency.len(),
            });
        }
        Ok(Self {
            shape,
            adj: adjacency,
        })
    }

    pub(crate) fn from_raw_parts(shape: GraphShape, adj: Vec<bool>) -> Self {
        debug_assert_eq!(adj.len(), shape.num_nodes() * shape.num_nodes());
        Self { shape, adj }
    }

    pub fn shape(&self) -> GraphShape {
        self.shape
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adj[from * self.shape.num_nodes() + to]
    }

    /// Number of edges (count of 1-entries in the adjacency matrix).
    pub fn edge_count(&self) -> usize {
        self.adj.iter().filter(|&&e| e).count()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let n = self.shape.num_nodes();
        self.adj
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(idx, _)| (NodeId(idx / n), NodeId(idx % n)))
            .collect()
    }

    /// True iff every edge is feasible and the graph is acyclic.
    pub fn is_valid_dag(&self) -> bool {
        let mask = FeasibilityMask::build(self.shape);
        let n = self.shape.num_nodes();
        for i in 0..n {
            for j in 0..n {
                if self.adj[i * n + j] && !mask.allowed(i, j) {
                    return false;
                }
            }
        }
        self.is_acyclic()
    }

    fn indegrees(&self) -> Vec<usize> {
        let n = self.shape.num_nodes();
        let mut indegree = vec![0usize; n];
        for (idx, &present) in self.adj.iter().enumerate() {
            if present {
                indegree[idx % n] += 1;
            }
        }
        indegree
    }

    fn is_acyclic(&self) -> bool {
        // Kahn's algorithm: all nodes drain iff there is no cycle.
        let n = self.shape.num_nodes();
        let mut indegree = self.indegrees();
        let mut ready: Vec<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
        let mut drained = 0;
        while let Some(i) = ready.pop() {
            drained += 1;
            for (j, &present) in self.adj[i * n..(i + 1) * n].iter().enumerate() {
                if present {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        drained == n
    }

    /// Deterministic execution order: Kahn's method with a min-index ready
    /// set, so independent nodes come out in ascending index order.
    pub fn topological_workflow(&self) -> Result<Vec<NodeId>, GraphError> {
        let n = self.shape.num_nodes();
        let mut indegree = self.indegrees();
        let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
            .filter(|&j| indegree[j] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(NodeId(i));
            for (j, &present) in self.adj[i * n..(i + 1) * n].iter().enumerate() {
                if present {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(Reverse(j));
                    }
                }
            }
        }
        if order.len() != n {
            return Err(GraphError::CycleDetected);
        }
        Ok(order)
    }

    /// Direct predecessors of `to`, ascending by index.
    pub fn upstream_nodes(&self, to: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let n = self.shape.num_nodes();
        if to.index() >= n {
            return Err(GraphError::NodeOutOfRange {
                index: to.index(),
                num_nodes: n,
            });
        }
        Ok((0..n)
            .filter(|&i| self.adj[i * n + to.index()])
            .map(NodeId)
            .collect())
    }

    /// Direct successors of `from`, ascending by index.
    pub fn downstream_nodes(&self, from: NodeId) -> Result<Vec<NodeId>, GraphError> {
        let n = self.shape.num_nodes();
        if from.index() >= n {
            return Err(GraphError::NodeOutOfRange {
                index: from.index(),
                num_nodes: n,
            });
        }
        Ok((0..n)
            .filter(|&j| self.adj[from.index() * n + j])
            .map(NodeId)
            .collect())
    }

    /// Serializes to CSV: a `# shape K=<K> T=<T>` header, then `T*K` lines
    /// of `T*K` comma-separated 0/1 entries, row-major.
    pub fn to_csv(&self) -> String {
        let n = self.shape.num_nodes();
        let mut out = format!(
            "# shape K={} T={}\n",
            self.shape.num_agents(),
            self.shape.num_rounds()
        );
        for i in 0..n {
            let row: Vec<&str> = (0..n)
                .map(|j| if self.adj[i * n + j] { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form produced by [`to_csv`](Self::to_csv) and validates
    /// the result as a feasible DAG.
    pub fn from_csv(text: &str) -> Result<Self, GraphError> {
        let (shape, rows) = parse_matrix_csv(text, |field, line| {
            match field {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(GraphError::Parse {
                    line,
                    message: format!("expected 0 or 1, got {other:?}"),
                }),
            }
        })?;
        let graph = Self::from_raw_parts(shape, rows);
        if !graph.is_valid_dag() {
            let mask = FeasibilityMask::build(shape);
            for (i, j) in graph.edges().iter().map(|(a, b)| (a.index(), b.index())) {
                if !mask.allowed(i, j) {
                    return Err(GraphError::InfeasibleEdge { from: i, to: j });
                }
            }
            return Err(GraphError::CycleDetected);
        }
        Ok(graph)
    }
}

/// Shared CSV parsing for the graph and heatmap formats: a
/// `# shape K=<K> T=<T>` header followed by `T*K` rows of `T*K` fields.
pub(crate) fn parse_matrix_csv<T, F>(text: &str, parse_field: F) -> Result<(GraphShape, Vec<T>), GraphError>
where
    F: Fn(&str, usize) -> Result<T, GraphError>,
{
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(GraphError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let shape = parse_shape_header(header)?;
    let n = shape.num_nodes();
    let mut data = Vec::with_capacity(n * n);
    let mut rows_seen = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        rows_seen += 1;
        if rows_seen > n {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("expected {n} rows, found more"),
            });
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("expected {n} fields, got {}", fields.len()),
            });
        }
        for field in fields {
            data.push(parse_field(field.trim(), line_no)?);
        }
    }
    if rows_seen != n {
        return Err(GraphError::Parse {
            line: rows_seen + 1,
            message: format!("expected {n} rows, got {rows_seen}"),
        });
    }
    Ok((shape, data))
}

fn parse_shape_header(header: &str) -> Result<GraphShape, GraphError> {
    let err = |message: String| GraphError::Parse { line: 1, message };
    let rest = header
        .trim()
        .strip_prefix("# shape ")
        .ok_or_else(|| err(format!("expected `# shape K=<K> T=<T>` header, got {header:?}")))?;
    let mut k = None;
    let mut t = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("K=") {
            k = Some(v.parse::<usize>().map_err(|e| err(format!("bad K: {e}")))?);
        } else if let Some(v) = part.strip_prefix("T=") {
            t = Some(v.parse::<usize>().map_err(|e| err(format!("bad T: {e}")))?);
        } else {
            return Err(err(format!("unexpected header token {part:?}")));
        }
    }
    match (k, t) {
        (Some(k), Some(t)) => GraphShape::new(k, t),
        _ => Err(err("header missing K= or T=".into())),
    }
}
