//! Run directories and batch execution.
//!
//! Layout under a run root:
//!
//! ```text
//! manifest.json       effective config, template hashes, schedule
//! traces/<id>.json    one trace per question, written atomically
//! summary.csv         one row per question, in input order
//! transcript.jsonl    recorded exchanges (when recording)
//! ```
//!
//! A question whose trace exists and is scored is not run again, so an
//! interrupted batch resumes where it stopped. Failed questions are retried.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::QuestionRecord;
use crate::engine::{EvaluationTrace, Evaluator, Mode};
use crate::metrics::{Metric, MetricScores};
use crate::provider::ProviderConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const TRACES_DIR: &str = "traces";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("run directory {root} was created with a different configuration (manifest hash {found}, expected {expected})")]
    ConfigMismatch { root: PathBuf, found: String, expected: String },
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join(SUMMARY_FILE)
    }

    pub fn transcript(&self) -> PathBuf {
        self.root.join(TRANSCRIPT_FILE)
    }

    pub fn traces_dir(&self) -> PathBuf {
        self.root.join(TRACES_DIR)
    }

    /// Trace path for a question id. Ids with characters outside
    /// `[A-Za-z0-9._-]` are sanitized and suffixed with a hash of the
    /// original so distinct ids never share a file.
    pub fn trace_path(&self, question_id: &str) -> PathBuf {
        let clean: String =
            question_id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect();
        let name = if clean == question_id && !clean.starts_with('.') {
            clean
        } else {
            let h = hex::encode(Sha256::digest(question_id.as_bytes()));
            format!("{}-{}", clean.trim_start_matches('.'), &h[..12])
        };
        self.traces_dir().join(format!("{name}.json"))
    }

    pub fn create(&self) -> Result<(), RunError> {
        let dir = self.traces_dir();
        fs::create_dir_all(&dir).map_err(io_at(&dir))
    }
}

/// Everything needed to re-execute a run, written before any question runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub mode: Mode,
    /// Grouping label for analysis (usually the judge model name).
    pub label: String,
    /// Effective run configuration after flag/file/default merging.
    pub config: Value,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_hash: String,
    pub template_hashes: BTreeMap<String, String>,
    pub temperatures: Vec<f64>,
    /// Redacted provider configs per role.
    pub providers: BTreeMap<String, ProviderConfig>,
    pub determinism: String,
}

pub fn config_hash(config: &Value) -> String {
    // serde_json maps are ordered by key, so this encoding is canonical
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

pub fn write_manifest(layout: &RunLayout, manifest: &Manifest) -> Result<(), RunError> {
    layout.create()?;
    let path = layout.manifest();
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_atomic(&path, format!("{text}\n").as_bytes())
}

pub fn read_manifest(layout: &RunLayout) -> Result<Manifest, RunError> {
    let path = layout.manifest();
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Format { path, message: e.to_string() })
}

/// Writes the manifest for a fresh run, or checks that an existing one was
/// produced by the same configuration.
pub fn prepare_run(layout: &RunLayout, manifest: &Manifest) -> Result<(), RunError> {
    if layout.manifest().exists() {
        let existing = read_manifest(layout)?;
        if existing.config_hash != manifest.config_hash {
            return Err(RunError::ConfigMismatch {
                root: layout.root().to_path_buf(),
                found: existing.config_hash,
                expected: manifest.config_hash.clone(),
            });
        }
    }
    write_manifest(layout, manifest)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_at(&tmp))?;
    fs::rename(&tmp, path).map_err(io_at(path))
}

pub fn write_trace(layout: &RunLayout, trace: &EvaluationTrace) -> Result<PathBuf, RunError> {
    let path = layout.trace_path(&trace.question_id);
    let text = serde_json::to_string_pretty(trace).expect("trace serializes");
    write_atomic(&path, format!("{text}\n").as_bytes())?;
    Ok(path)
}

pub fn read_trace(path: &Path) -> Result<EvaluationTrace, RunError> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Format { path: path.to_path_buf(), message: e.to_string() })
}

fn existing_trace(layout: &RunLayout, question_id: &str) -> Option<EvaluationTrace> {
    let path = layout.trace_path(question_id);
    if !path.exists() {
        return None;
    }
    read_trace(&path).ok().filter(|t| t.question_id == question_id)
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub question_id: String,
    pub dataset: String,
    pub mode: Mode,
    pub status: String,
    pub gram: Option<i64>,
    pub app: Option<i64>,
    pub rel: Option<i64>,
    pub nov: Option<i64>,
    pub com: Option<i64>,
    pub converged: bool,
    pub iterations_used: u32,
    pub repairs: usize,
    pub failure: String,
}

impl SummaryRow {
    pub fn from_trace(trace: &EvaluationTrace) -> Self {
        let s = trace.final_scores;
        let pick = |m: Metric| s.map(|s| s.get(m));
        SummaryRow {
            question_id: trace.question_id.clone(),
            dataset: trace.dataset.clone(),
            mode: trace.mode,
            status: if trace.is_scored() { "scored".into() } else { "failed".into() },
            gram: pick(Metric::Gram),
            app: pick(Metric::App),
            rel: pick(Metric::Rel),
            nov: pick(Metric::Nov),
            com: pick(Metric::Com),
            converged: trace.converged,
            iterations_used: trace.iterations_used,
            repairs: trace.repairs,
            failure: trace.failure_reason().unwrap_or_default().to_string(),
        }
    }

    pub fn scores(&self) -> Option<MetricScores> {
        Some(MetricScores::new(self.gram?, self.app?, self.rel?, self.nov?, self.com?))
    }

    pub fn is_scored(&self) -> bool {
        self.status == "scored" && self.scores().is_some()
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| RunError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    }
    if rows.is_empty() {
        w.write_record([
            "question_id",
            "dataset",
            "mode",
            "status",
            "gram",
            "app",
            "rel",
            "nov",
            "com",
            "converged",
            "iterations_used",
            "repairs",
            "failure",
        ])
        .map_err(|e| RunError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    }
    let bytes = w.into_inner().map_err(|e| RunError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    write_atomic(path, &bytes)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, RunError> {
    let file = fs::File::open(path).map_err(io_at(path))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| RunError::Format { path: path.to_path_buf(), message: format!("row {}: {e}", i + 1) }))
        .collect()
}

/// Progress notification after each executed question.
#[derive(Debug, Clone)]
pub struct Progress<'a> {
    pub done: usize,
    pub total: usize,
    pub question_id: &'a str,
    pub scored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchReport {
    pub rows: Vec<SummaryRow>,
    pub executed: usize,
    pub skipped: usize,
    pub failed: usize,
}

impl BatchReport {
    pub fn all_scored(&self) -> bool {
        self.failed == 0
    }
}

/// Evaluates every record not already completed under `layout`, with at most
/// `parallelism` questions in flight, then rewrites `summary.csv` in input
/// order. Individual failures are recorded, never propagated.
pub fn batch_evaluate(
    records: &[QuestionRecord],
    evaluator: &Evaluator,
    mode: Mode,
    layout: &RunLayout,
    parallelism: usize,
    progress: Option<&(dyn Fn(Progress<'_>) + Sync)>,
) -> Result<BatchReport, RunError> {
    if parallelism == 0 {
        return Err(RunError::Parallelism);
    }
    layout.create()?;

    let mut done: BTreeMap<usize, EvaluationTrace> = BTreeMap::new();
    let mut pending = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match existing_trace(layout, &r.id).filter(|t| t.is_scored() && t.mode == mode) {
            Some(t) => {
                done.insert(i, t);
            }
            None => pending.push(i),
        }
    }
    let skipped = done.len();

    let next = AtomicUsize::new(0);
    let finished = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, EvaluationTrace)>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<RunError>> = Mutex::new(None);
    let workers = parallelism.min(pending.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = pending.get(k) else { break };
                if first_error.lock().expect("lock").is_some() {
                    break;
                }
                let record = &records[idx];
                let trace = evaluator.evaluate(record, mode);
                if let Err(e) = write_trace(layout, &trace) {
                    first_error.lock().expect("lock").get_or_insert(e);
                    break;
                }
                let n = finished.fetch_add(1, Ordering::SeqCst) + 1;
                if let Some(cb) = progress {
                    cb(Progress { done: n, total: pending.len(), question_id: &record.id, scored: trace.is_scored() });
                }
                results.lock().expect("lock").push((idx, trace));
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("lock") {
        return Err(e);
    }
    let executed = {
        let results = results.into_inner().expect("lock");
        let n = results.len();
        done.extend(results);
        n
    };

    let rows: Vec<SummaryRow> = done.values().map(SummaryRow::from_trace).collect();
    write_summary(&layout.summary(), &rows)?;
    let failed = rows.iter().filter(|r| !r.is_scored()).count();
    Ok(BatchReport { rows, executed, skipped, failed })
}
