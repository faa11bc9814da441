//! Task items and JSON Lines dataset ingestion.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: missing field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: field \"{field}\" must be nonempty")]
    EmptyField { line: usize, field: &'static str },
    #[error("duplicate id \"{id}\" at lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
}

/// What kind of answer an item expects, which picks the scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultipleChoice,
    Numeric,
    Code,
    Synthetic,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::MultipleChoice => "multiple_choice",
            TaskKind::Numeric => "numeric",
            TaskKind::Code => "code",
            TaskKind::Synthetic => "synthetic",
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "multiple_choice" => Ok(TaskKind::MultipleChoice),
            "numeric" => Ok(TaskKind::Numeric),
            "code" => Ok(TaskKind::Code),
            "synthetic" => Ok(TaskKind::Synthetic),
            other => Err(format!(
                "unknown task kind {other:?} (expected multiple_choice, numeric, code, or synthetic)"
            )),
        }
    }
}

/// One task: a prompt, its reference answer, and (for code) unit tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub id: String,
    pub prompt: String,
    pub reference_answer: String,
    pub kind: TaskKind,
    /// Unit-test source appended to extracted code; code kind only.
    #[serde(default)]
    pub tests: Option<String>,
}

/// Loads a JSON Lines dataset with fields `{id, prompt, answer}` (code kind
/// additionally `{tests}`). Rejects missing fields (naming the line),
/// empty answers for non-code kinds, and duplicate ids (citing both lines).
pub fn load_dataset(path: &Path, kind: TaskKind) -> Result<Vec<TaskItem>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, kind)
}

/// Parses dataset text; exposed for in-memory fixtures.
pub fn parse_dataset(text: &str, kind: TaskKind) -> Result<Vec<TaskItem>, DatasetError> {
    let mut items = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| DatasetError::Json {
                line,
                message: e.to_string(),
            })?;
        let get_str = |field: &'static str| -> Result<String, DatasetError> {
            value
                .get(field)
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or(DatasetError::MissingField { line, field })
        };
        let id = get_str("id")?;
        let prompt = get_str("prompt")?;
        let answer = get_str("answer")?;
        if answer.is_empty() && kind != TaskKind::Code {
            return Err(DatasetError::EmptyField {
                line,
                field: "answer",
            });
        }
        let tests = if kind == TaskKind::Code {
            Some(get_str("tests")?)
        } else {
            None
        };
        if let Some(&first_line) = seen.get(&id) {
            return Err(DatasetError::DuplicateId {
                id,
                first_line,
                second_line: line,
            });
        }
        seen.insert(id.clone(), line);
        items.push(TaskItem {
            id,
            prompt,
            reference_answer: answer,
            kind,
            tests,
        });
    }
    Ok(items)
}
