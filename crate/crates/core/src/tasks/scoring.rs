//! Answer extraction and per-item scoring.
//!
//! Every scorer maps an answer to exactly 0.0 or 1.0 per item; batch
//! utility is the mean. The extraction rules are deliberately rigid:
//!
//! - multiple choice: uppercase, strip punctuation, take the first
//!   standalone token that is a single letter A-D;
//! - numeric: take the last number in the text (optional sign, thousands
//!   separators, decimals) and compare canonical forms;
//! - code: take the first fenced code block and run the item's tests.

use super::dataset::{TaskItem, TaskKind};
use super::sandbox::{CodeSandbox, SandboxError};
use crate::exec::Transcript;
use regex::Regex;
use std::sync::OnceLock;

/// First standalone option letter A-D after normalization, if any.
pub fn extract_choice_letter(answer: &str) -> Option<char> {
    let upper = answer.to_uppercase();
    let cleaned: String = upper
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .find(|token| token.len() == 1 && matches!(token.chars().next(), Some('A'..='D')))
        .and_then(|token| token.chars().next())
}

/// Majority-vote normalizer for multiple-choice answers: the extracted
/// letter, or the trimmed uppercase text when no letter is found.
pub fn normalize_choice_answer(answer: &str) -> String {
    match extract_choice_letter(answer) {
        Some(letter) => letter.to_string(),
        None => answer.trim().to_uppercase(),
    }
}

/// 1.0 iff the first standalone option letter matches the reference.
pub fn score_multiple_choice(answer: &str, item: &TaskItem) -> f64 {
    debug_assert_eq!(item.kind, TaskKind::MultipleChoice);
    let reference = match extract_choice_letter(&item.reference_answer) {
        Some(r) => r,
        None => return 0.0,
    };
    match extract_choice_letter(answer) {
        Some(found) if found == reference => 1.0,
        _ => 0.0,
    }
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[+-]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)").expect("valid regex"))
}

/// Last number in the text, canonicalized; `None` when no number appears.
pub fn extract_last_number(answer: &str) -> Option<String> {
    let raw = number_pattern().find_iter(answer).last()?.as_str();
    canonicalize_number(raw)
}

/// Majority-vote normalizer for numeric answers.
pub fn normalize_numeric_answer(answer: &str) -> String {
    extract_last_number(answer).unwrap_or_else(|| answer.trim().to_string())
}

/// Canonical number form: separators stripped, no leading zeros in the
/// integer part, no trailing zeros in the fraction, no bare trailing dot,
/// and negative zero collapsed to zero.
pub fn canonicalize_number(raw: &str) -> Option<String> {
    let cleaned: String = raw.trim().chars().filter(|&c| c != ',').collect();
    let (negative, digits) = match cleaned.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, cleaned.strip_prefix('+').unwrap_or(&cleaned)),
    };
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit() || c == '.') {
        return None;
    }
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    let int_trimmed = int_part.trim_start_matches('0');
    let int_canonical = if int_trimmed.is_empty() { "0" } else { int_trimmed };
    let frac_canonical = frac_part.trim_end_matches('0');
    let mut out = String::new();
    let is_zero = int_canonical == "0" && frac_canonical.is_empty();
    if negative && !is_zero {
        out.push('-');
    }
    out.push_str(int_canonical);
    if !frac_canonical.is_empty() {
        out.push('.');
        out.push_str(frac_canonical);
    }
    Some(out)
}

/// 1.0 iff the last number matches the canonicalized reference exactly.
pub fn score_numeric(answer: &str, item: &TaskItem) -> f64 {
    debug_assert_eq!(item.kind, TaskKind::Numeric);
    let reference = match canonicalize_number(&item.reference_answer)
        .or_else(|| extract_last_number(&item.reference_answer))
    {
        Some(r) => r,
        None => return 0.0,
    };
    match extract_last_number(answer) {
        Some(found) if found == reference => 1.0,
        _ => 0.0,
    }
}

/// First fenced code block (``` or ```lang), without the fences.
pub fn extract_code_block(answer: &str) -> Option<String> {
    let open = answer.find("```")?;
    let after_fence = &answer[open + 3..];
    let body_start = after_fence.find('\n')? + 1;
    let body = &after_fence[body_start..];
    let close = body.find("```")?;
    Some(body[..close].to_string())
}

/// pass@1: 1.0 iff the first fenced block, extended with the item's tests,
/// runs cleanly in the sandbox. A missing sandbox is an error (the kind is
/// disabled), not a silent zero; a timeout scores 0.0.
pub fn score_code(
    answer: &str,
    item: &TaskItem,
    sandbox: &dyn CodeSandbox,
) -> Result<f64, SandboxError> {
    debug_assert_eq!(item.kind, TaskKind::Code);
    let program = extract_code_block(answer).unwrap_or_default();
    let tests = item.tests.as_deref().unwrap_or_default();
    let source = format!("{program}\n\n{tests}\n");
    match sandbox.run(&source) {
        Ok(passed) => Ok(if passed { 1.0 } else { 0.0 }),
        Err(SandboxError::Timeout { .. }) => Ok(0.0),
        Err(other) => Err(other),
    }
}

/// Scores a transcript's final answer against an item by the item's kind.
pub struct TranscriptScorer<'a> {
    sandbox: Option<&'a dyn CodeSandbox>,
}

impl<'a> TranscriptScorer<'a> {
    pub fn new() -> Self {
        Self { sandbox: None }
    }

    pub fn with_sandbox(sandbox: &'a dyn CodeSandbox) -> Self {
        Self {
            sandbox: Some(sandbox),
        }
    }

    pub fn score(&self, transcript: &Transcript, item: &TaskItem) -> Result<f64, SandboxError> {
        match item.kind {
            TaskKind::MultipleChoice => Ok(score_multiple_choice(&transcript.final_answer, item)),
            TaskKind::Numeric => Ok(score_numeric(&transcript.final_answer, item)),
            TaskKind::Code => {
                let sandbox = self.sandbox.ok_or(SandboxError::Unavailable)?;
                score_code(&transcript.final_answer, item, sandbox)
            }
            TaskKind::Synthetic => Ok(0.0),
        }
    }

    /// Mean score over (transcript, item) pairs.
    pub fn batch(
        &self,
        pairs: &[(&Transcript, &TaskItem)],
    ) -> Result<f64, SandboxError> {
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (transcript, item) in pairs {
            total += self.score(transcript, item)?;
        }
        Ok(total / pairs.len() as f64)
    }
}

impl Default for TranscriptScorer<'_> {
    fn default() -> Self {
        Self::new()
    }
}
