//! Run configuration: file format, flag overrides, and resolution.

use crate::presets::preset_roles;
use crate::CliError;
use convtopo::graph::GraphShape;
use convtopo::optim::{ObjectiveConfig, Parameterization};
use convtopo::tasks::{LlmConfig, TaskKind};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Which backend produces agent replies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    #[default]
    Synthetic,
    Llm,
}

/// Aggregation selection; defaults per backend (majority vote for
/// synthetic, meta-LLM synthesis for live backends).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationChoice {
    LastRoundMajority,
    MetaLlm,
    Designated(usize),
}

/// Parameters of the synthetic golden-edge task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTaskConfig {
    pub golden_edges: Vec<(usize, usize)>,
    pub reward_per_edge: f64,
    pub penalty_per_extra_edge: f64,
    #[serde(default)]
    pub noise_scale: f64,
    /// Size of the placeholder dataset when no dataset file is given.
    #[serde(default = "default_synthetic_items")]
    pub items: usize,
}

fn default_synthetic_items() -> usize {
    8
}

/// Sandbox settings for code scoring; absent means code scoring stays
/// disabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeSandboxConfig {
    #[serde(default = "default_interpreter")]
    pub interpreter: String,
    #[serde(default = "default_sandbox_timeout")]
    pub timeout_secs: u64,
}

fn default_interpreter() -> String {
    "python3".into()
}

fn default_sandbox_timeout() -> u64 {
    10
}

/// Full run configuration, read from a JSON or TOML file and overridable
/// by flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task_kind: TaskKind,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Role prompts; defaults to the task kind's preset.
    #[serde(default)]
    pub roles: Option<Vec<String>>,
    /// Agents per round; defaults to the number of roles.
    #[serde(default)]
    pub num_agents: Option<usize>,
    pub num_rounds: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default = "default_minibatch_size")]
    pub minibatch_size: usize,
    #[serde(default)]
    pub baseline_enabled: bool,
    #[serde(default)]
    pub parameterization: Parameterization,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub aggregation: Option<AggregationChoice>,
    /// Run directory; defaults to `runs/<unix-timestamp>-seed<seed>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Starting heatmap snapshot; defaults to 0.5 on the feasible support.
    #[serde(default)]
    pub initial_heatmap: Option<PathBuf>,
    #[serde(default)]
    pub max_total_tokens: Option<u64>,
    #[serde(default)]
    pub synthetic: Option<SyntheticTaskConfig>,
    #[serde(default)]
    pub code_sandbox: Option<CodeSandboxConfig>,
    /// Backend model label recorded on agents.
    #[serde(default)]
    pub model_id: Option<String>,
    /// Level-parallel workflow execution (identical transcripts for
    /// deterministic backends).
    #[serde(default)]
    pub parallel_execution: bool,
}

fn default_beta() -> f64 {
    0.1
}

fn default_eta() -> f64 {
    0.1
}

fn default_iterations() -> usize {
    15
}

fn default_sample_size() -> usize {
    4
}

fn default_minibatch_size() -> usize {
    4
}

/// Flag overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub iterations: Option<usize>,
    pub sample_size: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Loads a config file, dispatching on the `.json` / `.toml` extension.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        match ext {
            "json" => serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid JSON config: {e}"))),
            "toml" => toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("invalid TOML config: {e}"))),
            other => Err(CliError::Config(format!(
                "unsupported config extension {other:?} (expected .json or .toml)"
            ))),
        }
    }

    pub fn apply_overrides(&mut self, overrides: &Overrides) {
        if let Some(beta) = overrides.beta {
            self.beta = beta;
        }
        if let Some(eta) = overrides.eta {
            self.eta = eta;
        }
        if let Some(iterations) = overrides.iterations {
            self.iterations = iterations;
        }
        if let Some(sample_size) = overrides.sample_size {
            self.sample_size = sample_size;
        }
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(out) = &overrides.output_dir {
            self.output_dir = Some(out.clone());
        }
    }

    /// Validates the configuration and fills every default.
    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        if self.num_rounds < 1 {
            return Err(CliError::Config("num_rounds must be >= 1".into()));
        }
        let roles = match &self.roles {
            Some(roles) if roles.is_empty() => {
                return Err(CliError::Config("roles must be nonempty when given".into()))
            }
            Some(roles) => roles.clone(),
            None => preset_roles(self.task_kind, self.num_agents.unwrap_or(2))?,
        };
        if let Some(k) = self.num_agents {
            if k != roles.len() {
                return Err(CliError::Config(format!(
                    "num_agents = {k} conflicts with {} roles",
                    roles.len()
                )));
            }
        }
        let shape = GraphShape::new(roles.len(), self.num_rounds)
            .map_err(|e| CliError::Config(e.to_string()))?;

        if self.task_kind != TaskKind::Synthetic && self.dataset.is_none() {
            return Err(CliError::Config(format!(
                "task kind {} requires a dataset path",
                self.task_kind.as_str()
            )));
        }
        if self.backend == BackendChoice::Llm && self.llm.is_none() {
            return Err(CliError::Config(
                "backend = llm requires an [llm] configuration block".into(),
            ));
        }
        if self.task_kind == TaskKind::Code && self.code_sandbox.is_none() {
            return Err(CliError::Config(
                "task kind code requires a [code_sandbox] block; code scoring is disabled without one".into(),
            ));
        }

        let objective_config = ObjectiveConfig {
            beta: self.beta,
            eta: self.eta,
            iterations: self.iterations,
            sample_size: self.sample_size,
            minibatch_size: self.minibatch_size,
            baseline_enabled: self.baseline_enabled,
            parameterization: self.parameterization,
        };
        objective_config
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;

        let synthetic = if self.task_kind == TaskKind::Synthetic {
            Some(match &self.synthetic {
                Some(s) => {
                    if s.items == 0 {
                        return Err(CliError::Config("synthetic.items must be >= 1".into()));
                    }
                    s.clone()
                }
                None => default_synthetic_task(shape),
            })
        } else {
            self.synthetic.clone()
        };

        let aggregation = self.aggregation.unwrap_or(match self.backend {
            BackendChoice::Synthetic => AggregationChoice::LastRoundMajority,
            BackendChoice::Llm => AggregationChoice::MetaLlm,
        });

        let model_id = self.model_id.clone().unwrap_or_else(|| match self.backend {
            BackendChoice::Synthetic => "synthetic".into(),
            BackendChoice::Llm => self
                .llm
                .as_ref()
                .map(|l| l.model.clone())
                .unwrap_or_else(|| "llm".into()),
        });

        Ok(ResolvedRun {
            config: self.clone(),
            shape,
            roles,
            objective_config,
            synthetic,
            aggregation,
            model_id,
        })
    }
}

/// Connects cross-round same-agent links; reward scaled so hitting the full
/// set exactly reaches utility 1.
fn default_synthetic_task(shape: GraphShape) -> SyntheticTaskConfig {
    let k = shape.num_agents();
    let t = shape.num_rounds();
    let golden_edges: Vec<(usize, usize)> = (0..t.saturating_sub(1))
        .flat_map(|round| (0..k).map(move |agent| (round * k + agent, (round + 1) * k + agent)))
        .collect();
    let reward = if golden_edges.is_empty() {
        0.25
    } else {
        1.0 / golden_edges.len() as f64
    };
    SyntheticTaskConfig {
        golden_edges,
        reward_per_edge: reward,
        penalty_per_extra_edge: 0.1,
        noise_scale: 0.0,
        items: default_synthetic_items(),
    }
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub config: RunConfig,
    pub shape: GraphShape,
    pub roles: Vec<String>,
    pub objective_config: ObjectiveConfig,
    pub synthetic: Option<SyntheticTaskConfig>,
    pub aggregation: AggregationChoice,
    pub model_id: String,
}
