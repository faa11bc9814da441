//! `convtopo` command-line entry point.

use clap::{Args, Parser, Subcommand};
use convtopo_cli::{
    run_eval, run_mask, run_optimize, run_sample, CliError, EvalArtifact, Overrides, RunConfig,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "convtopo",
    about = "Self-optimizing multi-agent conversation topologies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOverrides {
    /// Sparsity trade-off weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// Optimization iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Graphs sampled per iteration.
    #[arg(long)]
    samples: Option<usize>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonOverrides {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            beta: self.beta,
            eta: self.eta,
            iterations: self.iters,
            sample_size: self.samples,
            seed: self.seed,
            output_dir: self.out.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a conversation-topology heatmap on a task.
    Optimize {
        /// Run configuration file (.json or .toml).
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Evaluate a heatmap or fixed graph over a dataset.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Heatmap CSV: one graph is sampled per item.
        #[arg(long, conflicts_with = "graph")]
        heatmap: Option<PathBuf>,
        /// Graph CSV used for every item.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[command(flatten)]
        overrides: CommonOverrides,
    },
    /// Draw one DAG from a heatmap and print it as CSV.
    Sample {
        #[arg(long)]
        heatmap: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the feasibility mask for K agents over T rounds.
    Mask {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        rounds: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize { config, overrides } => {
            let mut run_config = RunConfig::load(&config)?;
            run_config.apply_overrides(&overrides.to_overrides());
            let artifacts = run_optimize(&run_config)?;
            eprintln!(
                "optimized {} iterations -> {}",
                artifacts.records.len(),
                artifacts.run_dir.display()
            );
            if let Some(last) = artifacts.records.last() {
                eprintln!(
                    "final objective estimate {:.6} (mean utility {:.6}, mean edges {:.3})",
                    last.objective_estimate, last.mean_utility, last.mean_edges
                );
            }
            Ok(())
        }
        Command::Eval {
            config,
            heatmap,
            graph,
            overrides,
        } => {
            let mut run_config = RunConfig::load(&config)?;
            run_config.apply_overrides(&overrides.to_overrides());
            let artifact = match (heatmap, graph) {
                (Some(h), None) => EvalArtifact::Heatmap(h),
                (None, Some(g)) => EvalArtifact::Graph(g),
                _ => {
                    return Err(CliError::Config(
                        "eval needs exactly one of --heatmap or --graph".into(),
                    ))
                }
            };
            let summary = run_eval(&run_config, &artifact)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary)
                    .map_err(|e| CliError::Runtime(e.to_string()))?
            );
            Ok(())
        }
        Command::Sample { heatmap, seed } => {
            let (csv, log_prob) = run_sample(&heatmap, seed)?;
            print!("{csv}");
            eprintln!("log_prob = {log_prob:.9}");
            Ok(())
        }
        Command::Mask { agents, rounds } => {
            let csv = run_mask(agents, rounds)?;
            print!("{csv}");
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
