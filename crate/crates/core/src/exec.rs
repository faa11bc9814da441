//! Workflow execution over a conversation graph.
//!
//! Agents are activated in the graph's topological workflow order. Each
//! activation assembles an input from the shared objective, the task text,
//! and the outputs of the node's upstream neighbors (ascending source
//! index, labeled with the sender's role and round), calls the backend,
//! and stores the reply. Replies are routed as a single message from the
//! sender to all of its downstream nodes, and token counts are accumulated
//! as they travel: a message's tokens count once as sent and once per
//! recipient as received. After every node has spoken, an aggregation mode
//! condenses the dialogue into a final answer.

use crate::graph::{ConversationGraph, GraphError, NodeId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Failure reported by an agent backend.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("credential rejected: {0}")]
    Credential(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("agent role must be nonempty")]
    EmptyRole,
    #[error("expected {expected} agents for the topology, got {actual}")]
    AgentCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("backend failed at node {node:?}: {source}")]
    Backend {
        node: Option<NodeId>,
        source: BackendError,
        partial: Box<Transcript>,
    },
    #[error("token budget {limit} exceeded ({used} used)")]
    BudgetExceeded {
        limit: u64,
        used: u64,
        partial: Box<Transcript>,
    },
    #[error("transcript has no agent outputs to aggregate")]
    EmptyTranscript,
    #[error("designated node {0} out of range")]
    DesignatedOutOfRange(usize),
}

/// One request to an agent backend. `node` is `None` for the aggregation
/// synthesis call.
#[derive(Debug, Clone)]
pub struct BackendRequest<'a> {
    pub system_prompt: &'a str,
    pub user_content: &'a str,
    pub node: Option<NodeId>,
}

/// Backend reply; token counts are provider-reported when available.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

impl BackendResponse {
    pub fn text_only(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            prompt_tokens: None,
            completion_tokens: None,
        }
    }
}

/// Produces an agent reply for a request. Implementations must tolerate
/// concurrent in-flight requests.
pub trait AgentBackend: Send + Sync {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<BackendResponse, BackendError>;
}

/// Static description of one agent: backend model label, role prompt, and
/// interface-only tool and knowledge-base bindings. Tools and knowledge
/// references are never executed; each activation records an invocation
/// intent for them in the transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub model_id: String,
    pub role: String,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default)]
    pub knowledge: Vec<String>,
}

impl AgentSpec {
    pub fn new(model_id: impl Into<String>, role: impl Into<String>) -> Result<Self, ExecError> {
        let role = role.into();
        if role.is_empty() {
            return Err(ExecError::EmptyRole);
        }
        Ok(Self {
            model_id: model_id.into(),
            role,
            tools: Vec::new(),
            knowledge: Vec::new(),
        })
    }

    pub fn with_tools(mut self, tools: Vec<String>) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_knowledge(mut self, knowledge: Vec<String>) -> Self {
        self.knowledge = knowledge;
        self
    }
}

/// A configured multi-agent system: `K` agents, a shared objective, the
/// conversation topology, and the workflow derived from it.
#[derive(Debug, Clone)]
pub struct MasSpec {
    agents: Vec<AgentSpec>,
    objective: String,
    topology: ConversationGraph,
    workflow: Vec<NodeId>,
}

impl MasSpec {
    pub fn new(
        agents: Vec<AgentSpec>,
        objective: impl Into<String>,
        topology: ConversationGraph,
    ) -> Result<Self, ExecError> {
        if agents.len() != topology.shape().num_agents() {
            return Err(ExecError::AgentCountMismatch {
                expected: topology.shape().num_agents(),
                actual: agents.len(),
            });
        }
        if agents.iter().any(|a| a.role.is_empty()) {
            return Err(ExecError::EmptyRole);
        }
        let workflow = topology.topological_workflow()?;
        Ok(Self {
            agents,
            objective: objective.into(),
            topology,
            workflow,
        })
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn objective(&self) -> &str {
        &self.objective
    }

    pub fn topology(&self) -> &ConversationGraph {
        &self.topology
    }

    pub fn workflow(&self) -> &[NodeId] {
        &self.workflow
    }

    /// The agent that speaks at a node.
    pub fn agent_at(&self, node: NodeId) -> &AgentSpec {
        &self.agents[self.topology.shape().agent_of(node)]
    }
}

/// One routed message: the sender's output fanned out to its downstream
/// nodes. Token count covers the content once; fan-out multiplies only the
/// received side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub from: NodeId,
    pub to: Vec<NodeId>,
    pub content: String,
    pub tokens: u64,
}

/// Recorded intent to use a tool or knowledge reference; never executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolIntent {
    pub node: NodeId,
    pub kind: String,
    pub name: String,
}

/// Complete record of one task execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub task_id: String,
    pub num_agents: usize,
    pub num_rounds: usize,
    pub agent_roles: Vec<String>,
    pub messages: Vec<Message>,
    /// Raw output of every node, indexed by node.
    pub node_outputs: Vec<String>,
    /// Per-agent memory: received messages and own outputs in insertion
    /// order, append-only during the run.
    pub agent_memories: Vec<Vec<String>>,
    pub final_answer: String,
    pub tokens_sent: u64,
    pub tokens_received: u64,
    /// Tokens spent by the aggregation synthesis call, tracked separately
    /// from inter-agent traffic.
    pub aggregator_tokens: u64,
    pub tool_intents: Vec<ToolIntent>,
}

/// How the final answer is produced from the dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Majority vote over the final-round outputs after normalization;
    /// ties go to the lowest agent index.
    LastRoundMajority,
    /// Return the output of a fixed node.
    Designated(NodeId),
    /// One extra backend call that reads the whole dialogue.
    MetaLlm,
}

/// Execution options.
pub struct ExecOptions<'a> {
    pub aggregation: AggregationMode,
    /// Task-specific answer normalization used by the majority vote.
    pub normalizer: Option<&'a (dyn Fn(&str) -> String + Sync)>,
    /// Cap on tokens sent plus tokens received (plus aggregation tokens).
    pub max_total_tokens: Option<u64>,
    /// Execute independent nodes level-parallel instead of sequentially.
    /// Both modes produce identical transcripts for deterministic backends.
    pub parallel: bool,
}

impl Default for ExecOptions<'static> {
    fn default() -> Self {
        Self {
            aggregation: AggregationMode::LastRoundMajority,
            normalizer: None,
            max_total_tokens: None,
            parallel: false,
        }
    }
}

/// Rough token count for text without provider-reported usage: one token
/// per 4 bytes, rounded up.
pub fn approx_token_count(content: &str) -> u64 {
    (content.len() as u64).div_ceil(4)
}

/// Assembles the input for a node: objective, task text, then upstream
/// outputs in ascending source order, each labeled with the sender's role
/// and round.
fn assemble_input(
    mas: &MasSpec,
    task_input: &str,
    node: NodeId,
    outputs: &[Option<String>],
) -> Result<String, ExecError> {
    let mut input = format!("Objective: {}\n\nTask: {}", mas.objective(), task_input);
    for upstream in mas.topology().upstream_nodes(node)? {
        let text = outputs[upstream.index()]
            .as_deref()
            .expect("workflow order guarantees upstream outputs exist");
        input.push_str(&format!(
            "\n\nFrom {} (round {}): {}",
            mas.agent_at(upstream).role,
            mas.topology().shape().round_of(upstream),
            text
        ));
    }
    Ok(input)
}

struct RunState<'m> {
    mas: &'m MasSpec,
    task_id: String,
    outputs: Vec<Option<String>>,
    completion_tokens: Vec<Option<u64>>,
    messages: Vec<Message>,
    memories: Vec<Vec<String>>,
    tool_intents: Vec<ToolIntent>,
    tokens_sent: u64,
    tokens_received: u64,
}

impl<'m> RunState<'m> {
    fn new(mas: &'m MasSpec, task_id: &str) -> Self {
        let n = mas.topology().shape().num_nodes();
        Self {
            mas,
            task_id: task_id.to_string(),
            outputs: vec![None; n],
            completion_tokens: vec![None; n],
            messages: Vec::new(),
            memories: vec![Vec::new(); mas.agents().len()],
            tool_intents: Vec::new(),
            tokens_sent: 0,
            tokens_received: 0,
        }
    }

    fn partial_transcript(&self) -> Box<Transcript> {
        Box::new(self.to_transcript(String::new(), 0))
    }

    fn to_transcript(&self, final_answer: String, aggregator_tokens: u64) -> Transcript {
        let shape = self.mas.topology().shape();
        Transcript {
            task_id: self.task_id.clone(),
            num_agents: shape.num_agents(),
            num_rounds: shape.num_rounds(),
            agent_roles: self.mas.agents().iter().map(|a| a.role.clone()).collect(),
            messages: self.messages.clone(),
            node_outputs: self
                .outputs
                .iter()
                .map(|o| o.clone().unwrap_or_default())
                .collect(),
            agent_memories: self.memories.clone(),
            final_answer,
            tokens_sent: self.tokens_sent,
            tokens_received: self.tokens_received,
            aggregator_tokens,
            tool_intents: self.tool_intents.clone(),
        }
    }

    /// Books a completed activation: memory, tool intents, and the routed
    /// message (when the node has downstream recipients).
    fn book_activation(&mut self, node: NodeId) -> Result<(), ExecError> {
        let agent_idx = self.mas.topology().shape().agent_of(node);
        let output = self.outputs[node.index()]
            .clone()
            .expect("activation output recorded before booking");

        for upstream in self.mas.topology().upstream_nodes(node)? {
            let received = self.outputs[upstream.index()]
                .clone()
                .expect("upstream output exists");
            self.memories[agent_idx].push(received);
        }
        self.memories[agent_idx].push(output.clone());

        let spec = self.mas.agent_at(node);
        for tool in &spec.tools {
            self.tool_intents.push(ToolIntent {
                node,
                kind: "tool".into(),
                name: tool.clone(),
            });
        }
        for kb in &spec.knowledge {
            self.tool_intents.push(ToolIntent {
                node,
                kind: "knowledge".into(),
                name: kb.clone(),
            });
        }

        let downstream = self.mas.topology().downstream_nodes(node)?;
        if !downstream.is_empty() {
            let tokens = self.completion_tokens[node.index()]
                .unwrap_or_else(|| approx_token_count(&output));
            self.tokens_sent += tokens;
            self.tokens_received += tokens * downstream.len() as u64;
            self.messages.push(Message {
                from: node,
                to: downstream,
                content: output,
                tokens,
            });
        }
        Ok(())
    }

    fn check_budget(&self, limit: Option<u64>, extra: u64) -> Result<(), ExecError> {
        if let Some(limit) = limit {
            let used = self.tokens_sent + self.tokens_received + extra;
            if used > limit {
                return Err(ExecError::BudgetExceeded {
                    limit,
                    used,
                    partial: self.partial_transcript(),
                });
            }
        }
        Ok(())
    }
}

/// Executes the system on one task and returns the full transcript.
///
/// Nodes run in workflow order (or level-parallel when requested; outputs
/// are identical for deterministic backends). A backend failure or budget
/// overrun aborts the run with the partial transcript attached.
pub fn execute(
    mas: &MasSpec,
    task_id: &str,
    task_input: &str,
    backend: &dyn AgentBackend,
    options: &ExecOptions<'_>,
) -> Result<Transcript, ExecError> {
    let mut state = RunState::new(mas, task_id);

    if options.parallel {
        for level in activation_levels(mas) {
            let replies = run_level_parallel(mas, task_input, backend, &state.outputs, &level)
                .map_err(|(node, source)| ExecError::Backend {
                    node: Some(node),
                    source,
                    partial: state.partial_transcript(),
                })?;
            for (node, response) in level.iter().copied().zip(replies) {
                state.outputs[node.index()] = Some(response.text);
                state.completion_tokens[node.index()] = response.completion_tokens;
            }
            for node in level {
                state.book_activation(node)?;
            }
            state.check_budget(options.max_total_tokens, 0)?;
        }
    } else {
        for &node in mas.workflow() {
            let input = assemble_input(mas, task_input, node, &state.outputs)?;
            let request = BackendRequest {
                system_prompt: &mas.agent_at(node).role,
                user_content: &input,
                node: Some(node),
            };
            let response = backend.respond(&request).map_err(|source| ExecError::Backend {
                node: Some(node),
                source,
                partial: state.partial_transcript(),
            })?;
            state.outputs[node.index()] = Some(response.text);
            state.completion_tokens[node.index()] = response.completion_tokens;
            state.book_activation(node)?;
            state.check_budget(options.max_total_tokens, 0)?;
        }
    }

    // Messages are naturally in sender-activation order in the sequential
    // path; normalize the parallel path to the same order.
    let position: HashMap<usize, usize> = mas
        .workflow()
        .iter()
        .enumerate()
        .map(|(pos, node)| (node.index(), pos))
        .collect();
    state
        .messages
        .sort_by_key(|m| position[&m.from.index()]);

    let draft = state.to_transcript(String::new(), 0);
    let outcome = aggregate(&draft, &options.aggregation, backend, options.normalizer)?;
    state.check_budget(options.max_total_tokens, outcome.tokens)?;
    Ok(state.to_transcript(outcome.final_answer, outcome.tokens))
}

/// Groups nodes into dependency levels: a node's level is one past the
/// deepest of its upstream nodes. Nodes within a level are independent.
fn activation_levels(mas: &MasSpec) -> Vec<Vec<NodeId>> {
    let n = mas.topology().shape().num_nodes();
    let mut level = vec![0usize; n];
    for &node in mas.workflow() {
        let ups = mas
            .topology()
            .upstream_nodes(node)
            .expect("workflow nodes are in range");
        level[node.index()] = ups
            .iter()
            .map(|u| level[u.index()] + 1)
            .max()
            .unwrap_or(0);
    }
    let depth = level.iter().copied().max().map_or(0, |d| d + 1);
    let mut levels = vec![Vec::new(); depth];
    // Ascending node index within each level keeps everything deterministic.
    for idx in 0..n {
        levels[level[idx]].push(NodeId::new(idx));
    }
    levels
}

type LevelError = (NodeId, BackendError);

fn run_level_parallel(
    mas: &MasSpec,
    task_input: &str,
    backend: &dyn AgentBackend,
    outputs: &[Option<String>],
    level: &[NodeId],
) -> Result<Vec<BackendResponse>, LevelError> {
    let inputs: Vec<String> = level
        .iter()
        .map(|&node| assemble_input(mas, task_input, node, outputs).expect("nodes in range"))
        .collect();
    let mut results: Vec<Option<Result<BackendResponse, BackendError>>> =
        (0..level.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(level.len());
        for (&node, input) in level.iter().zip(&inputs) {
            handles.push(scope.spawn(move || {
                backend.respond(&BackendRequest {
                    system_prompt: &mas.agent_at(node).role,
                    user_content: input,
                    node: Some(node),
                })
            }));
        }
        for (slot, handle) in handles.into_iter().enumerate() {
            results[slot] = Some(handle.join().expect("backend thread panicked"));
        }
    });
    let mut replies = Vec::with_capacity(level.len());
    for (&node, result) in level.iter().zip(results) {
        match result.expect("all slots filled") {
            Ok(response) => replies.push(response),
            Err(source) => return Err((node, source)),
        }
    }
    Ok(replies)
}

/// Outcome of an aggregation pass.
#[derive(Debug, Clone)]
pub struct AggregateOutcome {
    pub final_answer: String,
    /// Tokens consumed by the synthesis call; zero for rule-based modes.
    pub tokens: u64,
}

/// Condenses a completed transcript into a final answer.
///
/// `last_round_majority` votes over the `K` final-round outputs after
/// normalization (identity when no normalizer is given), breaking ties by
/// lowest agent index, and returns the winning agent's raw output.
/// `designated` returns a fixed node's output. `meta_llm` makes one extra
/// backend call over the rendered dialogue.
pub fn aggregate(
    transcript: &Transcript,
    mode: &AggregationMode,
    backend: &dyn AgentBackend,
    normalizer: Option<&(dyn Fn(&str) -> String + Sync)>,
) -> Result<AggregateOutcome, ExecError> {
    if transcript.node_outputs.is_empty() {
        return Err(ExecError::EmptyTranscript);
    }
    match mode {
        AggregationMode::LastRoundMajority => {
            let k = transcript.num_agents;
            let first_final = (transcript.num_rounds - 1) * k;
            let mut tally: HashMap<String, (usize, usize)> = HashMap::new();
            for agent in 0..k {
                let raw = &transcript.node_outputs[first_final + agent];
                let key = match normalizer {
                    Some(f) => f(raw),
                    None => raw.trim().to_string(),
                };
                let entry = tally.entry(key).or_insert((0, agent));
                entry.0 += 1;
            }
            let (_, (_, winner_agent)) = tally
                .into_iter()
                .max_by(|(ka, (ca, fa)), (kb, (cb, fb))| {
                    // Highest count wins; ties go to the lowest first-agent
                    // index. Key order is a final deterministic tiebreak.
                    ca.cmp(cb)
                        .then_with(|| fb.cmp(fa))
                        .then_with(|| kb.cmp(ka))
                })
                .expect("K >= 1 outputs");
            Ok(AggregateOutcome {
                final_answer: transcript.node_outputs[first_final + winner_agent].clone(),
                tokens: 0,
            })
        }
        AggregationMode::Designated(node) => {
            let answer = transcript
                .node_outputs
                .get(node.index())
                .ok_or(ExecError::DesignatedOutOfRange(node.index()))?;
            Ok(AggregateOutcome {
                final_answer: answer.clone(),
                tokens: 0,
            })
        }
        AggregationMode::MetaLlm => {
            let mut dialogue = String::new();
            for (idx, output) in transcript.node_outputs.iter().enumerate() {
                let agent = idx % transcript.num_agents;
                let round = idx / transcript.num_agents;
                dialogue.push_str(&format!(
                    "[{} | round {}]\n{}\n\n",
                    transcript.agent_roles[agent], round, output
                ));
            }
            let prompt = format!(
                "Below is the complete dialogue of a team of agents working on a task.\n\n{dialogue}Read the dialogue and state the team's final answer to the task, and nothing else."
            );
            let request = BackendRequest {
                system_prompt: "You synthesize a multi-agent dialogue into one final answer.",
                user_content: &prompt,
                node: None,
            };
            let response = backend.respond(&request).map_err(|source| ExecError::Backend {
                node: None,
                source,
                partial: Box::new(transcript.clone()),
            })?;
            let tokens = match (response.prompt_tokens, response.completion_tokens) {
                (Some(p), Some(c)) => p + c,
                _ => approx_token_count(&prompt) + approx_token_count(&response.text),
            };
            Ok(AggregateOutcome {
                final_answer: response.text,
                tokens,
            })
        }
    }
}
