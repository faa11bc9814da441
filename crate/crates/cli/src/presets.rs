//! Role presets and per-kind objective prompts.

use crate::CliError;
use convtopo::tasks::TaskKind;

/// Role prompts for a task kind. General reasoning uses a seven-agent
/// panel, math a four-agent panel, and code generation a three-agent
/// pipeline; the synthetic kind gets `num_agents` generic workers.
pub fn preset_roles(kind: TaskKind, num_agents: usize) -> Result<Vec<String>, CliError> {
    let named = |names: &[&str]| -> Vec<String> {
        names
            .iter()
            .map(|n| format!("You are the {n}. Contribute your specialty to the team's answer."))
            .collect()
    };
    match kind {
        TaskKind::MultipleChoice => Ok(named(&[
            "Knowledge Expert",
            "Wiki Searcher",
            "Critic",
            "Mathematician",
            "Programmer",
            "Doctor",
            "Economist",
        ])),
        TaskKind::Numeric => Ok(named(&[
            "Math Solver",
            "Mathematical Analyst",
            "Programming Expert",
            "Inspector",
        ])),
        TaskKind::Code => Ok(named(&[
            "Algorithm Designer",
            "Programming Expert",
            "Test Analyst",
        ])),
        TaskKind::Synthetic => {
            if num_agents == 0 {
                return Err(CliError::Config(
                    "synthetic preset needs num_agents >= 1".into(),
                ));
            }
            Ok((0..num_agents)
                .map(|i| format!("You are Worker-{i}. Work the task with your teammates."))
                .collect())
        }
    }
}

/// Shared objective prompt handed to every agent for a task kind.
pub fn objective_for_kind(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::MultipleChoice => {
            "Answer the multiple-choice question. Finish with the single option letter (A, B, C, or D)."
        }
        TaskKind::Numeric => {
            "Solve the math word problem step by step. Finish with the final numeric answer."
        }
        TaskKind::Code => {
            "Write a correct solution. Return the complete code in one fenced code block."
        }
        TaskKind::Synthetic => "Work the synthetic task together.",
    }
}
