//! Loading `<context, question>` pairs and human rating files.
//!
//! Pair files are JSON Lines: one object per line with `context`,
//! `question`, and optional `id` and `subject`. Whitespace-only lines are not
//! rows. Rating files are comma-separated with the header
//! `question_id,rater_id,gram,app,rel,nov,com`.
//!
//! Row numbers in errors are 1-based and count data rows only.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{Metric, MetricScores, Scale};

/// Header every ratings file must start with.
pub const RATINGS_HEADER: [&str; 7] = ["question_id", "rater_id", "gram", "app", "rel", "nov", "com"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub context: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub question_id: String,
    pub rater_id: String,
    pub scores: MetricScores,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("row {row}: field {field:?} {problem}")]
    Malformed { row: usize, field: String, problem: String },
    #[error("row {row}: duplicate question id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("row {row}: {metric} score {token:?} is not an integer in {min}-{max}")]
    ScoreRange { row: usize, metric: Metric, token: String, min: i64, max: i64 },
    #[error("row {row}: duplicate rating for question {question_id:?} by rater {rater_id:?}")]
    DuplicateRating { row: usize, question_id: String, rater_id: String },
    #[error("ratings header must be {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

/// Deterministic id for a row that carries none.
pub fn synthesize_id(dataset_tag: &str, row: usize) -> String {
    format!("{dataset_tag}-{row:05}")
}

fn malformed(row: usize, field: &str, problem: &str) -> DatasetError {
    DatasetError::Malformed { row, field: field.to_string(), problem: problem.to_string() }
}

fn required_text(obj: &serde_json::Map<String, Value>, row: usize, field: &str) -> Result<String, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(malformed(row, field, "is missing")),
        Some(Value::String(s)) => {
            let t = s.trim();
            if t.is_empty() {
                Err(malformed(row, field, "is blank"))
            } else {
                Ok(t.to_string())
            }
        }
        Some(_) => Err(malformed(row, field, "must be a string")),
    }
}

fn optional_text(obj: &serde_json::Map<String, Value>, row: usize, field: &str) -> Result<Option<String>, DatasetError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        // Numeric ids are common in exported datasets.
        Some(Value::Number(n)) if field == "id" => Ok(Some(n.to_string())),
        Some(_) => Err(malformed(row, field, "must be a string")),
    }
}

/// Parses pair records from JSON Lines text. `dataset_tag` is stamped on every
/// record and seeds synthesized ids.
pub fn parse_pairs(text: &str, dataset_tag: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut row = 0usize;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let value: Value = serde_json::from_str(line).map_err(|e| malformed(row, "<record>", &format!("is not valid JSON ({e})")))?;
        let Value::Object(obj) = value else {
            return Err(malformed(row, "<record>", "must be a JSON object"));
        };
        let context = required_text(&obj, row, "context")?;
        let question = required_text(&obj, row, "question")?;
        let subject = optional_text(&obj, row, "subject")?;
        let id = optional_text(&obj, row, "id")?.unwrap_or_else(|| synthesize_id(dataset_tag, row));
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId { row, id });
        }
        records.push(QuestionRecord { id, dataset: dataset_tag.to_string(), subject, context, question });
    }
    Ok(records)
}

pub fn load_pairs(path: &Path, dataset_tag: &str) -> Result<Vec<QuestionRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_pairs(&text, dataset_tag)
}

#[derive(Serialize)]
struct PairLine<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject: Option<&'a str>,
    context: &'a str,
    question: &'a str,
}

/// Writes records in the pair-file format. The dataset tag is not stored;
/// it is supplied again on load.
pub fn write_pairs<W: Write>(mut out: W, records: &[QuestionRecord]) -> io::Result<()> {
    for r in records {
        let line = PairLine { id: &r.id, subject: r.subject.as_deref(), context: &r.context, question: &r.question };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a ratings table. Every score must be an integer inside `scale`.
pub fn parse_human_ratings<R: io::Read>(input: R, scale: Scale) -> Result<Vec<HumanRating>, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(input);
    let header = reader.headers().map_err(|e| malformed(0, "<header>", &e.to_string()))?.clone();
    let found: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if found.is_empty() || (found.len() == 1 && found[0].is_empty()) {
        return Ok(Vec::new());
    }
    if found != RATINGS_HEADER {
        return Err(DatasetError::BadHeader { expected: RATINGS_HEADER.join(","), found: header.iter().collect::<Vec<_>>().join(",") });
    }

    let mut out = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| malformed(row, "<record>", &e.to_string()))?;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let question_id = field(0).to_string();
        if question_id.is_empty() {
            return Err(malformed(row, "question_id", "is missing"));
        }
        let rater_id = field(1).to_string();
        if rater_id.is_empty() {
            return Err(malformed(row, "rater_id", "is missing"));
        }
        let mut scores = MetricScores::new(0, 0, 0, 0, 0);
        for (k, metric) in Metric::ALL.into_iter().enumerate() {
            let token = field(2 + k);
            let value = token.parse::<i64>().ok().filter(|v| scale.contains(*v)).ok_or_else(|| DatasetError::ScoreRange {
                row,
                metric,
                token: token.to_string(),
                min: scale.min,
                max: scale.max,
            })?;
            scores.set(metric, value);
        }
        if rec.len() > RATINGS_HEADER.len() {
            return Err(malformed(row, "<record>", "has more fields than the header"));
        }
        if !seen.insert((question_id.clone(), rater_id.clone())) {
            return Err(DatasetError::DuplicateRating { row, question_id, rater_id });
        }
        out.push(HumanRating { question_id, rater_id, scores });
    }
    Ok(out)
}

pub fn load_human_ratings(path: &Path, scale: Scale) -> Result<Vec<HumanRating>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    parse_human_ratings(file, scale)
}

/// Groups ratings by question id, preserving first-seen order of raters.
pub fn ratings_by_question(ratings: &[HumanRating]) -> HashMap<&str, Vec<MetricScores>> {
    let mut map: HashMap<&str, Vec<MetricScores>> = HashMap::new();
    for r in ratings {
        map.entry(r.question_id.as_str()).or_default().push(r.scores);
    }
    map
}
