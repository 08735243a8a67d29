//! Reading model output: score blocks, strength/weakness candidates, judge
//! verdicts, and the single-retry repair loop.
//!
//! The answer contract: a model ends its reply with a fenced block of
//! `Label: <integer>` entries. Scores use the metric labels
//! (`Gram`, `App`, `Rel`, `Nov`, `Com`); judge replies add `BestStrength` and
//! `BestWeakness`. Entries are separated by newlines, commas, or semicolons.
//! Labels are case-insensitive. Only the last fenced block is read.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Metric, MetricScores, Scale};

pub const BEST_STRENGTH_LABEL: &str = "BestStrength";
pub const BEST_WEAKNESS_LABEL: &str = "BestWeakness";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ParseError {
    #[error("no fenced answer block found")]
    MissingBlock,
    #[error("answer block has no {0} entry")]
    MissingField(String),
    #[error("answer block repeats the {0} entry")]
    DuplicateField(String),
    #[error("{field} value {token:?} is not an integer in {min}-{max}")]
    Range { field: String, token: String, min: i64, max: i64 },
    #[error("the {0} section is missing or empty")]
    MissingSection(String),
}

/// A strength/weakness critique with no provenance attached.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Critique {
    pub strength: String,
    pub weakness: String,
}

impl Critique {
    pub fn new(strength: impl Into<String>, weakness: impl Into<String>) -> Self {
        Critique { strength: strength.into(), weakness: weakness.into() }
    }
}

/// The judge's choice of best strength and best weakness plus its scores.
/// Indices are 1-based into the judged candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub best_strength_index: usize,
    pub best_weakness_index: usize,
    pub scores: MetricScores,
}

/// Instruction text describing the score block. Embedded in every prompt.
pub fn score_format_instructions(scale: Scale) -> String {
    let mut s = format!(
        "End your reply with a fenced block (opened and closed by three backticks) containing exactly these lines, \
         each value an integer from {} to {}:\n```\n",
        scale.min, scale.max
    );
    for m in Metric::ALL {
        let _ = writeln!(s, "{}: <integer>", m.label());
    }
    s.push_str("```");
    s
}

/// Instruction text for the judge block: two indices, then the scores.
pub fn judge_format_instructions(scale: Scale, candidate_count: usize) -> String {
    let mut s = format!(
        "End your reply with a fenced block (opened and closed by three backticks) containing exactly these lines. \
         {BEST_STRENGTH_LABEL} and {BEST_WEAKNESS_LABEL} are candidate numbers from 1 to {candidate_count}; \
         every metric value is an integer from {} to {}:\n```\n{BEST_STRENGTH_LABEL}: <index>\n{BEST_WEAKNESS_LABEL}: <index>\n",
        scale.min, scale.max
    );
    for m in Metric::ALL {
        let _ = writeln!(s, "{}: <integer>", m.label());
    }
    s.push_str("```");
    s
}

/// Instruction text for a generation reply.
pub fn candidate_format_instructions() -> String {
    "Answer with exactly two labeled sections and nothing else:\nStrength: <one strength of the question>\nWeakness: <one weakness of the question>"
        .to_string()
}

/// Renders scores as a contract block. Inverse of [`parse_scores`].
pub fn format_score_block(scores: &MetricScores) -> String {
    let mut s = String::from("```\n");
    for (m, v) in scores.iter() {
        let _ = writeln!(s, "{}: {v}", m.label());
    }
    s.push_str("```\n");
    s
}

/// Renders a judge verdict as a contract block. Inverse of [`parse_judge_verdict`].
pub fn format_verdict_block(verdict: &JudgeVerdict) -> String {
    let mut s =
        format!("```\n{BEST_STRENGTH_LABEL}: {}\n{BEST_WEAKNESS_LABEL}: {}\n", verdict.best_strength_index, verdict.best_weakness_index);
    for (m, v) in verdict.scores.iter() {
        let _ = writeln!(s, "{}: {v}", m.label());
    }
    s.push_str("```\n");
    s
}

/// Body of the last fenced block. An opening fence with no closing fence runs
/// to the end of the text.
fn last_fenced_block(text: &str) -> Option<&str> {
    let mut open: Option<usize> = None;
    let mut last: Option<(usize, usize)> = None;
    let mut offset = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if trimmed.starts_with("```") {
            match open {
                None => open = Some(offset + line.len()),
                Some(start) => {
                    last = Some((start, offset));
                    open = None;
                }
            }
        }
        offset += line.len();
    }
    if let Some(start) = open {
        last = Some((start, text.len()));
    }
    last.map(|(a, b)| &text[a..b])
}

/// `label -> raw value token` for every `label: value` entry in the block.
fn block_entries(block: &str) -> Result<HashMap<String, String>, ParseError> {
    let mut entries = HashMap::new();
    for item in block.split(['\n', ',', ';']) {
        let Some((label, value)) = item.split_once(':') else {
            continue;
        };
        let key = label.trim().trim_matches('*').trim().to_ascii_lowercase();
        if key.is_empty() {
            continue;
        }
        let value = value.trim().trim_matches('*').trim().to_string();
        if entries.insert(key.clone(), value).is_some() {
            return Err(ParseError::DuplicateField(key));
        }
    }
    Ok(entries)
}

fn strict_int(token: &str) -> Option<i64> {
    let digits = token.strip_prefix(['+', '-']).unwrap_or(token);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    token.parse().ok()
}

fn scores_from_entries(entries: &HashMap<String, String>, scale: Scale) -> Result<MetricScores, ParseError> {
    let mut scores = MetricScores::new(0, 0, 0, 0, 0);
    for metric in Metric::ALL {
        let token =
            entries.get(&metric.label().to_ascii_lowercase()).ok_or_else(|| ParseError::MissingField(metric.label().to_string()))?;
        let value = strict_int(token).filter(|v| scale.contains(*v)).ok_or_else(|| ParseError::Range {
            field: metric.label().to_string(),
            token: token.clone(),
            min: scale.min,
            max: scale.max,
        })?;
        scores.set(metric, value);
    }
    Ok(scores)
}

/// Extracts the five labeled scores from the final fenced block of `text`.
pub fn parse_scores(text: &str, scale: Scale) -> Result<MetricScores, ParseError> {
    let block = last_fenced_block(text).ok_or(ParseError::MissingBlock)?;
    scores_from_entries(&block_entries(block)?, scale)
}

fn index_from_entries(entries: &HashMap<String, String>, label: &str, count: usize) -> Result<usize, ParseError> {
    let token = entries.get(&label.to_ascii_lowercase()).ok_or_else(|| ParseError::MissingField(label.to_string()))?;
    strict_int(token).filter(|v| (1..=count as i64).contains(v)).map(|v| v as usize).ok_or_else(|| ParseError::Range {
        field: label.to_string(),
        token: token.clone(),
        min: 1,
        max: count as i64,
    })
}

/// Reads the judge's chosen indices and scores from the final fenced block.
pub fn parse_judge_verdict(text: &str, candidate_count: usize, scale: Scale) -> Result<JudgeVerdict, ParseError> {
    let block = last_fenced_block(text).ok_or(ParseError::MissingBlock)?;
    let entries = block_entries(block)?;
    let best_strength_index = index_from_entries(&entries, BEST_STRENGTH_LABEL, candidate_count)?;
    let best_weakness_index = index_from_entries(&entries, BEST_WEAKNESS_LABEL, candidate_count)?;
    let scores = scores_from_entries(&entries, scale)?;
    Ok(JudgeVerdict { best_strength_index, best_weakness_index, scores })
}

static SECTION_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)(?:^|[^A-Za-z0-9])[*#_\s]*(strength|weakness|flaw)[*_]*\s*:[*_]*").expect("static regex"));

/// Splits a generation reply into its `Strength:` and `Weakness:` sections.
/// Sections are found by label, so their order does not matter. `Flaw:` is
/// accepted for the weakness. When a label repeats, the last one wins.
pub fn parse_candidate(text: &str) -> Result<Critique, ParseError> {
    let marks: Vec<(bool, usize, usize)> = SECTION_LABEL
        .captures_iter(text)
        .map(|c| {
            let whole = c.get(0).expect("match");
            let label = c.get(1).expect("group");
            (label.as_str().eq_ignore_ascii_case("strength"), label.start(), whole.end())
        })
        .collect();
    let section = |want_strength: bool| -> Option<String> {
        let pos = marks.iter().rposition(|m| m.0 == want_strength)?;
        let body_start = marks[pos].2;
        let body_end = marks.get(pos + 1).map(|m| m.1).unwrap_or(text.len());
        let body = text[body_start..body_end].trim().trim_matches(|c: char| c == '*' || c == '`').trim();
        (!body.is_empty()).then(|| body.to_string())
    };
    let strength = section(true).ok_or_else(|| ParseError::MissingSection("Strength".into()))?;
    let weakness = section(false).ok_or_else(|| ParseError::MissingSection("Weakness".into()))?;
    Ok(Critique { strength, weakness })
}

/// Suffix appended to the original prompt when asking the model to fix a
/// malformed reply.
pub fn repair_instruction(error: &ParseError) -> String {
    format!("\n\nYour previous reply could not be read: {error}. Reply again, following the required output format exactly.")
}

/// Outcome of [`parse_with_repair`]: the parsed value and every raw reply seen.
#[derive(Debug, Clone, PartialEq)]
pub struct Repaired<T> {
    pub value: T,
    pub raw_attempts: Vec<String>,
}

impl<T> Repaired<T> {
    pub fn repaired(&self) -> bool {
        self.raw_attempts.len() > 1
    }
}

#[derive(Debug, Error)]
pub enum RepairError<E> {
    /// Both the original reply and the single re-ask were unreadable.
    #[error("reply unreadable after one repair attempt: {first_error}; then {second_error}")]
    Exhausted { first_error: Box<ParseError>, second_error: Box<ParseError>, raw_attempts: Vec<String> },
    /// The re-ask itself failed (transport, replay miss, ...).
    #[error("repair request failed after: {first_error}")]
    Reask {
        first_error: ParseError,
        raw_attempts: Vec<String>,
        #[source]
        source: E,
    },
}

/// Parses `first_text`; on failure issues exactly one re-ask with a suffix
/// naming the fault and parses that. A second failure is terminal.
pub fn parse_with_repair<T, E, P, F>(first_text: String, mut reask: F, parser: P) -> Result<Repaired<T>, RepairError<E>>
where
    P: Fn(&str) -> Result<T, ParseError>,
    F: FnMut(&str) -> Result<String, E>,
{
    let first_error = match parser(&first_text) {
        Ok(value) => return Ok(Repaired { value, raw_attempts: vec![first_text] }),
        Err(e) => e,
    };
    let second_text = match reask(&repair_instruction(&first_error)) {
        Ok(t) => t,
        Err(source) => return Err(RepairError::Reask { first_error, raw_attempts: vec![first_text], source }),
    };
    match parser(&second_text) {
        Ok(value) => Ok(Repaired { value, raw_attempts: vec![first_text, second_text] }),
        Err(second_error) => Err(RepairError::Exhausted {
            first_error: Box::new(first_error),
            second_error: Box::new(second_error),
            raw_attempts: vec![first_text, second_text],
        }),
    }
}
