//! Run drivers: optimize, eval, sample, and mask.

use crate::config::{AggregationChoice, BackendChoice, ResolvedRun, RunConfig};
use crate::presets::objective_for_kind;
use crate::CliError;
use convtopo::exec::{
    execute, AgentBackend, AgentSpec, AggregationMode, ExecOptions, MasSpec, Transcript,
};
use convtopo::graph::{ConversationGraph, FeasibilityMask, GraphShape, NodeId};
use convtopo::heatmap::{sample_dag, Heatmap};
use convtopo::optim::{
    optimize, EvaluatorError, OptimizeRun, RunRecord, SnapshotSink, UtilityEvaluator,
};
use convtopo::seeding::derive_stream_seed;
use convtopo::tasks::{
    load_dataset, normalize_choice_answer, normalize_numeric_answer, CodeSandbox, EchoBackend,
    GoldenEdgeTask, LlmClient, ProcessSandbox, TaskItem, TaskKind, TranscriptScorer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

/// Stream labels for seeds derived from the master seed.
const STREAM_BEST_GRAPH: u64 = 0xBE57;
const STREAM_EVAL: u64 = 0xE7A1;

/// Artifacts written by an optimization run.
#[derive(Debug, Clone)]
pub struct OptimizeArtifacts {
    pub run_dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub final_heatmap: PathBuf,
    pub best_graph: PathBuf,
}

/// Evaluation artifact: a heatmap (one graph sampled per item) or a fixed
/// graph used for every item.
#[derive(Debug, Clone)]
pub enum EvalArtifact {
    Heatmap(PathBuf),
    Graph(PathBuf),
}

/// Summary written by an evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub total_tokens_sent: u64,
    pub total_tokens_received: u64,
    pub mean_edges: f64,
}

fn io_err(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{context}: {e}"))
}

fn resolve_run_dir(config: &RunConfig) -> PathBuf {
    match &config.output_dir {
        Some(dir) => dir.clone(),
        None => {
            let ts = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("runs").join(format!("{ts}-seed{}", config.seed))
        }
    }
}

fn load_items(resolved: &ResolvedRun) -> Result<Vec<TaskItem>, CliError> {
    match &resolved.config.dataset {
        Some(path) => load_dataset(path, resolved.config.task_kind)
            .map_err(|e| CliError::Config(format!("dataset error: {e}"))),
        None => {
            // Synthetic kind without a dataset file: placeholder items.
            let count = resolved
                .synthetic
                .as_ref()
                .map(|s| s.items)
                .unwrap_or(8);
            Ok((0..count)
                .map(|i| TaskItem {
                    id: format!("synthetic-{i}"),
                    prompt: format!("synthetic task {i}"),
                    reference_answer: "0".into(),
                    kind: TaskKind::Synthetic,
                    tests: None,
                })
                .collect())
        }
    }
}

fn initial_heatmap(resolved: &ResolvedRun) -> Result<Heatmap, CliError> {
    match &resolved.config.initial_heatmap {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read initial heatmap: {e}")))?;
            let heatmap = Heatmap::from_csv(&text)
                .map_err(|e| CliError::Config(format!("invalid initial heatmap: {e}")))?;
            if heatmap.shape() != resolved.shape {
                return Err(CliError::Config(format!(
                    "initial heatmap shape K={} T={} does not match configured K={} T={}",
                    heatmap.shape().num_agents(),
                    heatmap.shape().num_rounds(),
                    resolved.shape.num_agents(),
                    resolved.shape.num_rounds()
                )));
            }
            Ok(heatmap)
        }
        None => Heatmap::uniform(resolved.shape, 0.5)
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

fn build_backend(resolved: &ResolvedRun) -> Result<Box<dyn AgentBackend>, CliError> {
    match resolved.config.backend {
        BackendChoice::Synthetic => Ok(Box::new(EchoBackend)),
        BackendChoice::Llm => {
            let llm = resolved
                .config
                .llm
                .clone()
                .expect("resolve() guarantees an llm block");
            Ok(Box::new(
                LlmClient::new(llm).map_err(|e| CliError::Config(e.to_string()))?,
            ))
        }
    }
}

fn build_sandbox(resolved: &ResolvedRun) -> Option<ProcessSandbox> {
    resolved.config.code_sandbox.as_ref().map(|c| {
        ProcessSandbox::new(c.interpreter.clone(), Duration::from_secs(c.timeout_secs))
    })
}

fn aggregation_mode(choice: AggregationChoice) -> AggregationMode {
    match choice {
        AggregationChoice::LastRoundMajority => AggregationMode::LastRoundMajority,
        AggregationChoice::MetaLlm => AggregationMode::MetaLlm,
        AggregationChoice::Designated(node) => AggregationMode::Designated(NodeId::new(node)),
    }
}

fn normalizer_for(kind: TaskKind) -> Option<&'static (dyn Fn(&str) -> String + Sync)> {
    static CHOICE: fn(&str) -> String = normalize_choice_answer;
    static NUMERIC: fn(&str) -> String = normalize_numeric_answer;
    match kind {
        TaskKind::MultipleChoice => Some(&CHOICE),
        TaskKind::Numeric => Some(&NUMERIC),
        TaskKind::Code | TaskKind::Synthetic => None,
    }
}

fn golden_task(resolved: &ResolvedRun) -> Result<GoldenEdgeTask, CliError> {
    let synth = resolved
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("synthetic task parameters missing".into()))?;
    GoldenEdgeTask::new(
        resolved.shape,
        &synth.golden_edges,
        synth.reward_per_edge,
        synth.penalty_per_extra_edge,
        synth.noise_scale,
        resolved.config.seed,
    )
    .map_err(|e| CliError::Config(format!("synthetic golden edges: {e}")))
}

/// Executes the configured multi-agent system on dataset items and scores
/// the transcripts; used as the optimizer's utility when the task is not
/// synthetic.
struct MasEvaluator<'a> {
    resolved: &'a ResolvedRun,
    items: &'a [TaskItem],
    backend: &'a dyn AgentBackend,
    sandbox: Option<&'a dyn CodeSandbox>,
}

impl MasEvaluator<'_> {
    fn run_item(
        &self,
        graph: &ConversationGraph,
        item: &TaskItem,
    ) -> Result<Transcript, EvaluatorError> {
        let agents: Vec<AgentSpec> = self
            .resolved
            .roles
            .iter()
            .map(|role| AgentSpec::new(self.resolved.model_id.clone(), role.clone()))
            .collect::<Result<_, _>>()
            .map_err(|e| EvaluatorError(e.to_string()))?;
        let mas = MasSpec::new(
            agents,
            objective_for_kind(self.resolved.config.task_kind),
            graph.clone(),
        )
        .map_err(|e| EvaluatorError(e.to_string()))?;
        let options = ExecOptions {
            aggregation: aggregation_mode(self.resolved.aggregation),
            normalizer: normalizer_for(self.resolved.config.task_kind),
            max_total_tokens: self.resolved.config.max_total_tokens,
            parallel: self.resolved.config.parallel_execution,
        };
        execute(&mas, &item.id, &item.prompt, self.backend, &options)
            .map_err(|e| EvaluatorError(e.to_string()))
    }

    fn score_item(
        &self,
        graph: &ConversationGraph,
        item: &TaskItem,
    ) -> Result<(Transcript, f64), EvaluatorError> {
        let transcript = self.run_item(graph, item)?;
        let scorer = match self.sandbox {
            Some(s) => TranscriptScorer::with_sandbox(s),
            None => TranscriptScorer::new(),
        };
        let score = scorer
            .score(&transcript, item)
            .map_err(|e| EvaluatorError(e.to_string()))?;
        Ok((transcript, score))
    }
}

impl UtilityEvaluator for MasEvaluator<'_> {
    fn evaluate(
        &self,
        graph: &ConversationGraph,
        minibatch: &[usize],
    ) -> Result<f64, EvaluatorError> {
        if minibatch.is_empty() {
            return Err(EvaluatorError("empty minibatch".into()));
        }
        let mut total = 0.0;
        for &idx in minibatch {
            let item = self
                .items
                .get(idx)
                .ok_or_else(|| EvaluatorError(format!("item index {idx} out of range")))?;
            let (_, score) = self.score_item(graph, item)?;
            total += score;
        }
        Ok(total / minibatch.len() as f64)
    }
}

/// Writes snapshots into the run directory and records paths relative to
/// it, keeping the artifact tree relocatable and byte-deterministic.
struct CsvSnapshotSink {
    dir: PathBuf,
}

impl SnapshotSink for CsvSnapshotSink {
    fn save(&mut self, iteration: usize, heatmap: &Heatmap) -> Result<String, String> {
        let name = format!("heatmap_iter_{iteration}.csv");
        std::fs::write(self.dir.join(&name), heatmap.to_csv()).map_err(|e| e.to_string())?;
        Ok(name)
    }
}

/// Runs heatmap optimization end to end and writes the artifact tree:
/// `config.json`, `heatmap_iter_<m>.csv`, `runlog.jsonl`,
/// `final_heatmap.csv`, and `best_graph.csv` (highest objective among a
/// final batch of `sample_size` samples).
pub fn run_optimize(config: &RunConfig) -> Result<OptimizeArtifacts, CliError> {
    let resolved = config.resolve()?;
    let items = load_items(&resolved)?;
    if items.is_empty() {
        return Err(CliError::Config("dataset is empty".into()));
    }
    let initial = initial_heatmap(&resolved)?;

    let run_dir = resolve_run_dir(config);
    std::fs::create_dir_all(&run_dir).map_err(|e| io_err("cannot create run directory", e))?;
    let config_json = serde_json::to_string_pretty(config)
        .map_err(|e| io_err("cannot serialize config", e))?;
    std::fs::write(run_dir.join("config.json"), config_json)
        .map_err(|e| io_err("cannot write config.json", e))?;

    let backend = build_backend(&resolved)?;
    let sandbox = build_sandbox(&resolved);
    let golden;
    let mas_eval;
    let evaluator: &dyn UtilityEvaluator = if resolved.config.task_kind == TaskKind::Synthetic {
        golden = golden_task(&resolved)?;
        &golden
    } else {
        mas_eval = MasEvaluator {
            resolved: &resolved,
            items: &items,
            backend: backend.as_ref(),
            sandbox: sandbox.as_ref().map(|s| s as &dyn CodeSandbox),
        };
        &mas_eval
    };

    let mut sink = CsvSnapshotSink {
        dir: run_dir.clone(),
    };
    let run = optimize(
        &initial,
        evaluator,
        items.len(),
        &resolved.objective_config,
        config.seed,
        &mut sink,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    write_runlog(&run_dir.join("runlog.jsonl"), &run.records)?;
    let final_heatmap_path = run_dir.join("final_heatmap.csv");
    std::fs::write(&final_heatmap_path, run.heatmap.to_csv())
        .map_err(|e| io_err("cannot write final heatmap", e))?;

    let best_graph_path = run_dir.join("best_graph.csv");
    let best = best_of_final_batch(&run, evaluator, &items, &resolved)?;
    std::fs::write(&best_graph_path, best.to_csv())
        .map_err(|e| io_err("cannot write best graph", e))?;

    Ok(OptimizeArtifacts {
        run_dir,
        records: run.records,
        final_heatmap: final_heatmap_path,
        best_graph: best_graph_path,
    })
}

fn write_runlog(path: &Path, records: &[RunRecord]) -> Result<(), CliError> {
    let mut file =
        std::fs::File::create(path).map_err(|e| io_err("cannot create runlog.jsonl", e))?;
    for record in records {
        let line =
            serde_json::to_string(record).map_err(|e| io_err("cannot serialize record", e))?;
        writeln!(file, "{line}").map_err(|e| io_err("cannot write runlog.jsonl", e))?;
    }
    Ok(())
}

/// Draws `sample_size` graphs from the final heatmap and keeps the one with
/// the highest `utility - beta * edges` on the full dataset (first drawn
/// wins ties).
fn best_of_final_batch(
    run: &OptimizeRun,
    evaluator: &dyn UtilityEvaluator,
    items: &[TaskItem],
    resolved: &ResolvedRun,
) -> Result<ConversationGraph, CliError> {
    let all_indices: Vec<usize> = (0..items.len()).collect();
    let mut best: Option<(f64, ConversationGraph)> = None;
    for n in 0..resolved.objective_config.sample_size {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(
            resolved.config.seed,
            STREAM_BEST_GRAPH,
            n as u64,
        ));
        let sample = sample_dag(&run.heatmap, &mut rng);
        let utility = evaluator
            .evaluate(&sample.graph, &all_indices)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let objective = utility - resolved.config.beta * sample.graph.edge_count() as f64;
        let better = match &best {
            Some((best_obj, _)) => objective > *best_obj,
            None => true,
        };
        if better {
            best = Some((objective, sample.graph));
        }
    }
    Ok(best.expect("sample_size >= 1").1)
}

/// Evaluates a heatmap or fixed graph over the dataset: executes the system
/// per item, scores the answers, and writes `summary.json` plus one
/// transcript JSON per item under `transcripts/`.
pub fn run_eval(config: &RunConfig, artifact: &EvalArtifact) -> Result<EvalSummary, CliError> {
    let resolved = config.resolve()?;
    let items = load_items(&resolved)?;
    if items.is_empty() {
        return Err(CliError::Config("dataset is empty".into()));
    }

    let (heatmap, fixed_graph) = match artifact {
        EvalArtifact::Heatmap(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read heatmap: {e}")))?;
            let h = Heatmap::from_csv(&text)
                .map_err(|e| CliError::Config(format!("invalid heatmap: {e}")))?;
            (Some(h), None)
        }
        EvalArtifact::Graph(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read graph: {e}")))?;
            let g = ConversationGraph::from_csv(&text)
                .map_err(|e| CliError::Config(format!("invalid graph: {e}")))?;
            (None, Some(g))
        }
    };
    let artifact_shape = heatmap
        .as_ref()
        .map(|h| h.shape())
        .or(fixed_graph.as_ref().map(|g| g.shape()))
        .expect("one artifact present");
    if artifact_shape != resolved.shape {
        return Err(CliError::Config(format!(
            "artifact shape K={} T={} does not match configured K={} T={}",
            artifact_shape.num_agents(),
            artifact_shape.num_rounds(),
            resolved.shape.num_agents(),
            resolved.shape.num_rounds()
        )));
    }

    let run_dir = resolve_run_dir(config);
    let transcripts_dir = run_dir.join("transcripts");
    std::fs::create_dir_all(&transcripts_dir)
        .map_err(|e| io_err("cannot create transcripts directory", e))?;

    let backend = build_backend(&resolved)?;
    let sandbox = build_sandbox(&resolved);
    let mas_eval = MasEvaluator {
        resolved: &resolved,
        items: &items,
        backend: backend.as_ref(),
        sandbox: sandbox.as_ref().map(|s| s as &dyn CodeSandbox),
    };
    let golden = if resolved.config.task_kind == TaskKind::Synthetic {
        Some(golden_task(&resolved)?)
    } else {
        None
    };

    let mut total_score = 0.0;
    let mut total_sent = 0u64;
    let mut total_received = 0u64;
    let mut total_edges = 0usize;
    for (idx, item) in items.iter().enumerate() {
        let graph = match (&fixed_graph, &heatmap) {
            (Some(g), _) => g.clone(),
            (None, Some(h)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(
                    config.seed,
                    STREAM_EVAL,
                    idx as u64,
                ));
                sample_dag(h, &mut rng).graph
            }
            (None, None) => unreachable!(),
        };
        total_edges += graph.edge_count();
        let (transcript, score) = match &golden {
            // Synthetic items are scored by the golden-edge utility of the
            // graph; the transcript still exercises the execution path.
            Some(task) => {
                let transcript = mas_eval
                    .run_item(&graph, item)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                (transcript, task.utility(&graph))
            }
            None => mas_eval
                .score_item(&graph, item)
                .map_err(|e| CliError::Runtime(e.to_string()))?,
        };
        total_score += score;
        total_sent += transcript.tokens_sent;
        total_received += transcript.tokens_received;
        let json = serde_json::to_string_pretty(&transcript)
            .map_err(|e| io_err("cannot serialize transcript", e))?;
        std::fs::write(transcripts_dir.join(format!("{}.json", item.id)), json)
            .map_err(|e| io_err("cannot write transcript", e))?;
    }

    let summary = EvalSummary {
        accuracy: total_score / items.len() as f64,
        total_tokens_sent: total_sent,
        total_tokens_received: total_received,
        mean_edges: total_edges as f64 / items.len() as f64,
    };
    let summary_json = serde_json::to_string_pretty(&summary)
        .map_err(|e| io_err("cannot serialize summary", e))?;
    std::fs::write(run_dir.join("summary.json"), summary_json)
        .map_err(|e| io_err("cannot write summary.json", e))?;
    Ok(summary)
}

/// Samples one graph from a heatmap file and returns its CSV plus the
/// sample's log-probability.
pub fn run_sample(heatmap_path: &Path, seed: u64) -> Result<(String, f64), CliError> {
    let text = std::fs::read_to_string(heatmap_path)
        .map_err(|e| CliError::Config(format!("cannot read heatmap: {e}")))?;
    let heatmap =
        Heatmap::from_csv(&text).map_err(|e| CliError::Config(format!("invalid heatmap: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_dag(&heatmap, &mut rng);
    Ok((sample.graph.to_csv(), sample.log_prob))
}

/// Renders the feasibility mask for a shape in the graph CSV format.
pub fn run_mask(num_agents: usize, num_rounds: usize) -> Result<String, CliError> {
    let shape =
        GraphShape::new(num_agents, num_rounds).map_err(|e| CliError::Config(e.to_string()))?;
    let mask = FeasibilityMask::build(shape);
    let n = shape.num_nodes();
    let mut out = format!("# shape K={num_agents} T={num_rounds}\n");
    for i in 0..n {
        let row: Vec<&str> = (0..n)
            .map(|j| if mask.allowed(i, j) { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}
