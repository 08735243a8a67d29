//! Agreement between machine scores and human ratings.
//!
//! Reports follow the usual layout for this kind of study: models as rows,
//! the five metrics as columns, grouped by dataset and by approach (baseline
//! vs. feedback-based). Every table is written twice: a CSV with full
//! precision and a text rendering at two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::HumanRating;
use crate::engine::Mode;
use crate::metrics::{Metric, MetricScores};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{0}")]
    Argument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn arg<T>(msg: impl Into<String>) -> Result<T, AnalysisError> {
    Err(AnalysisError::Argument(msg.into()))
}

/// Sample Pearson correlation, or `None` when either sample has zero variance.
///
/// Errors when the lengths differ or fewer than two pairs are given.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalysisError> {
    if x.len() != y.len() {
        return arg(format!("pearson_r: length mismatch ({} vs {})", x.len(), y.len()));
    }
    if x.len() < 2 {
        return arg(format!("pearson_r: need at least 2 pairs, got {}", x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Arithmetic mean per metric.
pub fn metric_means(scores: &[MetricScores]) -> Option<[f64; 5]> {
    if scores.is_empty() {
        return None;
    }
    let n = scores.len() as f64;
    let mut out = [0.0; 5];
    for (k, m) in Metric::ALL.into_iter().enumerate() {
        out[k] = scores.iter().map(|s| s.get(m) as f64).sum::<f64>() / n;
    }
    Some(out)
}

/// Per-metric exact-match percentages over a joined question set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub n: usize,
    pub matches: [usize; 5],
}

impl MatchReport {
    /// `100 * matches / n` for the metric.
    pub fn percentage(&self, metric: Metric) -> f64 {
        let k = metric_index(metric);
        100.0 * self.matches[k] as f64 / self.n as f64
    }
}

fn metric_index(metric: Metric) -> usize {
    Metric::ALL.iter().position(|m| *m == metric).expect("canonical")
}

/// Compares integer scores question by question. Only ids present on both
/// sides count; an empty join is an error.
pub fn exact_match_rate(
    llm: &BTreeMap<String, MetricScores>,
    human: &BTreeMap<String, MetricScores>,
) -> Result<MatchReport, AnalysisError> {
    let mut n = 0;
    let mut matches = [0usize; 5];
    for (id, a) in llm {
        let Some(b) = human.get(id) else { continue };
        n += 1;
        for (k, m) in Metric::ALL.into_iter().enumerate() {
            if a.get(m) == b.get(m) {
                matches[k] += 1;
            }
        }
    }
    if n == 0 {
        return arg("exact_match_rate: no question ids in common");
    }
    Ok(MatchReport { n, matches })
}

/// Per-question mean of all ratings; used for correlation.
pub fn collapse_mean(ratings: &[HumanRating]) -> BTreeMap<String, [f64; 5]> {
    let mut grouped: BTreeMap<String, Vec<MetricScores>> = BTreeMap::new();
    for r in ratings {
        grouped.entry(r.question_id.clone()).or_default().push(r.scores);
    }
    grouped.into_iter().map(|(id, v)| (id, metric_means(&v).expect("non-empty group"))).collect()
}

/// Per-question mode of all ratings, ties broken toward the lower score;
/// used for exact matching.
pub fn collapse_mode(ratings: &[HumanRating]) -> BTreeMap<String, MetricScores> {
    let mut grouped: BTreeMap<String, Vec<MetricScores>> = BTreeMap::new();
    for r in ratings {
        grouped.entry(r.question_id.clone()).or_default().push(r.scores);
    }
    grouped
        .into_iter()
        .map(|(id, v)| {
            let mut out = MetricScores::new(0, 0, 0, 0, 0);
            for m in Metric::ALL {
                let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
                for s in &v {
                    *counts.entry(s.get(m)).or_default() += 1;
                }
                // BTreeMap iterates ascending, and max_by_key keeps the last
                // maximum, so walk in reverse to keep the lowest.
                let (value, _) = counts.into_iter().rev().max_by_key(|(_, c)| *c).expect("non-empty");
                out.set(m, value);
            }
            (id, out)
        })
        .collect()
}

/// Which questions enter the exact-match analysis.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum SampleSpec {
    #[default]
    All,
    Ids(BTreeSet<String>),
    /// `k` ids per dataset drawn with a seeded generator.
    Random {
        k: usize,
        seed: u64,
    },
}

/// Applies `spec` to a sorted candidate pool.
pub fn select_sample(pool: &[String], spec: &SampleSpec) -> Vec<String> {
    let mut pool: Vec<String> = pool.to_vec();
    pool.sort();
    pool.dedup();
    match spec {
        SampleSpec::All => pool,
        SampleSpec::Ids(ids) => pool.into_iter().filter(|id| ids.contains(id)).collect(),
        SampleSpec::Random { k, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut chosen: Vec<String> = pool.choose_multiple(&mut rng, (*k).min(pool.len())).cloned().collect();
            chosen.sort();
            chosen
        }
    }
}

/// Machine scores from one run, tagged for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct RunScores {
    pub label: String,
    pub approach: Mode,
    /// `(question_id, dataset, scores)`; failed questions are left out.
    pub questions: Vec<(String, String, MetricScores)>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub dataset: String,
    pub approach: Mode,
    pub label: String,
}

pub fn approach_title(mode: Mode) -> &'static str {
    match mode {
        Mode::Baseline => "Baseline Approach",
        Mode::Strive => "Feedback-based Approach",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanRow {
    pub means: [f64; 5],
    pub count: usize,
}

/// Mean scores per group, plus the human mean per dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable {
    pub human: BTreeMap<String, MeanRow>,
    pub machine: BTreeMap<GroupKey, MeanRow>,
}

/// One correlation cell. `r` is `None` exactly when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationCell {
    pub r: Option<f64>,
    pub n: usize,
}

impl CorrelationCell {
    pub fn undefined(&self) -> bool {
        self.r.is_none()
    }
}

pub type CorrelationRow = [CorrelationCell; 5];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub means: MetricTable,
    pub correlations: BTreeMap<GroupKey, CorrelationRow>,
    pub matches: BTreeMap<GroupKey, MatchReport>,
    /// Feedback-based minus baseline correlation, per dataset and label.
    pub deltas: BTreeMap<(String, String), [Option<f64>; 5]>,
}

/// Correlates machine scores with per-question human means, one cell per metric.
pub fn correlate(machine: &BTreeMap<String, MetricScores>, human: &BTreeMap<String, [f64; 5]>) -> CorrelationRow {
    let joined: Vec<(&MetricScores, &[f64; 5])> = machine.iter().filter_map(|(id, s)| human.get(id).map(|h| (s, h))).collect();
    let mut row = [CorrelationCell { r: None, n: joined.len() }; 5];
    for (k, m) in Metric::ALL.into_iter().enumerate() {
        let x: Vec<f64> = joined.iter().map(|(s, _)| s.get(m) as f64).collect();
        let y: Vec<f64> = joined.iter().map(|(_, h)| h[k]).collect();
        row[k].r = pearson_r(&x, &y).ok().flatten();
    }
    row
}

/// Builds every table from run scores and ratings.
pub fn analyze(runs: &[RunScores], ratings: &[HumanRating], sample: &SampleSpec) -> Result<AnalysisReport, AnalysisError> {
    if runs.is_empty() {
        return arg("no runs to analyze");
    }
    if ratings.is_empty() {
        return arg("no human ratings supplied");
    }
    let human_mean = collapse_mean(ratings);
    let human_mode = collapse_mode(ratings);

    let mut dataset_of: BTreeMap<String, String> = BTreeMap::new();
    let mut groups: BTreeMap<GroupKey, BTreeMap<String, MetricScores>> = BTreeMap::new();
    for run in runs {
        for (id, dataset, scores) in &run.questions {
            dataset_of.insert(id.clone(), dataset.clone());
            let key = GroupKey { dataset: dataset.clone(), approach: run.approach, label: run.label.clone() };
            groups.entry(key).or_default().insert(id.clone(), *scores);
        }
    }
    let rated_known: BTreeSet<&String> = human_mean.keys().filter(|id| dataset_of.contains_key(*id)).collect();
    if rated_known.is_empty() {
        return arg("no question ids in common between the runs and the ratings");
    }
    let unknown = human_mean.len() - rated_known.len();
    if unknown > 0 {
        log::warn!("{unknown} rated question id(s) do not appear in any run and are ignored");
    }

    let mut human_rows: BTreeMap<String, MeanRow> = BTreeMap::new();
    let mut per_dataset: BTreeSet<&str> = BTreeSet::new();
    for id in &rated_known {
        // mean over questions of each question's rater mean
        let h = human_mean[*id];
        let dataset = dataset_of[*id].as_str();
        per_dataset.insert(dataset);
        human_rows
            .entry(dataset.to_string())
            .and_modify(|row| {
                for (sum, v) in row.means.iter_mut().zip(h) {
                    *sum += v;
                }
                row.count += 1;
            })
            .or_insert(MeanRow { means: h, count: 1 });
    }
    for row in human_rows.values_mut() {
        for v in &mut row.means {
            *v /= row.count as f64;
        }
    }

    let mut machine_rows = BTreeMap::new();
    for (key, scores) in &groups {
        let v: Vec<MetricScores> = scores.values().copied().collect();
        match metric_means(&v) {
            Some(means) => {
                machine_rows.insert(key.clone(), MeanRow { means, count: v.len() });
            }
            None => log::warn!("group {key:?} has no scored questions; omitted"),
        }
    }

    let correlations: BTreeMap<GroupKey, CorrelationRow> =
        groups.iter().map(|(key, scores)| (key.clone(), correlate(scores, &human_mean))).collect();

    let mut samples: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for dataset in &per_dataset {
        let pool: Vec<String> = rated_known.iter().filter(|id| dataset_of[**id] == *dataset).map(|id| (*id).clone()).collect();
        samples.insert(dataset, select_sample(&pool, sample).into_iter().collect());
    }
    let mut matches = BTreeMap::new();
    for (key, scores) in &groups {
        let Some(sampled) = samples.get(key.dataset.as_str()) else { continue };
        let subset: BTreeMap<String, MetricScores> =
            scores.iter().filter(|(id, _)| sampled.contains(*id)).map(|(id, s)| (id.clone(), *s)).collect();
        match exact_match_rate(&subset, &human_mode) {
            Ok(m) => {
                matches.insert(key.clone(), m);
            }
            Err(_) => log::warn!("group {key:?} has no sampled rated questions; omitted from the match table"),
        }
    }

    let mut deltas = BTreeMap::new();
    for (key, row) in &correlations {
        if key.approach != Mode::Strive {
            continue;
        }
        let base_key = GroupKey { approach: Mode::Baseline, ..key.clone() };
        if let Some(base) = correlations.get(&base_key) {
            let mut d = [None; 5];
            for k in 0..5 {
                d[k] = match (row[k].r, base[k].r) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                };
            }
            deltas.insert((key.dataset.clone(), key.label.clone()), d);
        }
    }

    Ok(AnalysisReport { means: MetricTable { human: human_rows, machine: machine_rows }, correlations, matches, deltas })
}

// ---------------------------------------------------------------------------
// rendering

const NA: &str = "n/a";

struct TextTable {
    title: String,
    rows: Vec<TextRow>,
    footnotes: Vec<String>,
}

enum TextRow {
    Section(String),
    Data(String, [String; 5]),
}

impl TextTable {
    fn render(&self) -> String {
        let label_w = self
            .rows
            .iter()
            .filter_map(|r| match r {
                TextRow::Data(l, _) => Some(l.chars().count()),
                TextRow::Section(_) => None,
            })
            .chain(std::iter::once("Model".len()))
            .max()
            .unwrap_or(5);
        let col_w = 7usize;
        let total = label_w + 5 * (col_w + 2);
        let rule = "-".repeat(total);
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "{}", "=".repeat(total));
        let _ = write!(s, "{:<label_w$}", "Model");
        for m in Metric::ALL {
            let _ = write!(s, "  {:>col_w$}", m.label());
        }
        s.push('\n');
        let _ = writeln!(s, "{rule}");
        for row in &self.rows {
            match row {
                TextRow::Section(name) => {
                    let _ = writeln!(s, "{rule}");
                    let _ = writeln!(s, "{name}");
                    let _ = writeln!(s, "{rule}");
                }
                TextRow::Data(label, cells) => {
                    let _ = write!(s, "{label:<label_w$}");
                    for c in cells {
                        let _ = write!(s, "  {c:>col_w$}");
                    }
                    s.push('\n');
                }
            }
        }
        let _ = writeln!(s, "{rule}");
        for f in &self.footnotes {
            let _ = writeln!(s, "{f}");
        }
        s
    }
}

fn fmt2(v: f64) -> String {
    format!("{v:.2}")
}

fn cells(values: [f64; 5]) -> [String; 5] {
    values.map(fmt2)
}

fn datasets(report: &AnalysisReport) -> BTreeSet<String> {
    report
        .means
        .human
        .keys()
        .cloned()
        .chain(report.means.machine.keys().map(|k| k.dataset.clone()))
        .chain(report.correlations.keys().map(|k| k.dataset.clone()))
        .collect()
}

/// Mean tables: human baseline row, then one section per approach.
pub fn render_means_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    for dataset in datasets(report) {
        let mut rows = Vec::new();
        if let Some(h) = report.means.human.get(&dataset) {
            rows.push(TextRow::Data("Human Baseline".into(), cells(h.means)));
        }
        for approach in [Mode::Baseline, Mode::Strive] {
            let group: Vec<(&GroupKey, &MeanRow)> =
                report.means.machine.iter().filter(|(k, _)| k.dataset == dataset && k.approach == approach).collect();
            if group.is_empty() {
                continue;
            }
            rows.push(TextRow::Section(format!("{dataset} ({})", approach_title(approach))));
            for (k, row) in group {
                rows.push(TextRow::Data(k.label.clone(), cells(row.means)));
            }
        }
        let table = TextTable { title: format!("Mean scores: {dataset}"), rows, footnotes: Vec::new() };
        out.push_str(&table.render());
        out.push('\n');
    }
    out
}

pub fn render_means_csv(report: &AnalysisReport) -> String {
    let mut s = String::from("dataset,approach,model,gram,app,rel,nov,com,n\n");
    for (dataset, h) in &report.means.human {
        let _ = writeln!(s, "{},human,Human Baseline,{},{}", csv_field(dataset), join_f64(&h.means), h.count);
    }
    for (k, row) in &report.means.machine {
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(&k.dataset), k.approach, csv_field(&k.label), join_f64(&row.means), row.count);
    }
    s
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn corr_cells(row: &CorrelationRow) -> ([String; 5], bool) {
    let mut any_undefined = false;
    let c = row.map(|c| match c.r {
        Some(r) => fmt2(r),
        None => {
            any_undefined = true;
            format!("{NA}*")
        }
    });
    (c, any_undefined)
}

const UNDEFINED_NOTE: &str = "* n/a: correlation undefined (fewer than two pairs or zero variance).";

/// Correlation table: one section per dataset, one row per model and approach.
pub fn render_correlation_text(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    let mut footnote = false;
    for dataset in datasets(report) {
        let group: Vec<_> = report.correlations.iter().filter(|(k, _)| k.dataset == dataset).collect();
        if group.is_empty() {
            continue;
        }
        rows.push(TextRow::Section(dataset.clone()));
        for (k, row) in group {
            let (c, u) = corr_cells(row);
            footnote |= u;
            rows.push(TextRow::Data(format!("{} ({})", k.label, approach_title(k.approach)), c));
        }
    }
    let footnotes = if footnote { vec![UNDEFINED_NOTE.to_string()] } else { Vec::new() };
    TextTable { title: "Pearson correlation with human ratings".into(), rows, footnotes }.render()
}

pub fn render_correlation_csv(report: &AnalysisReport) -> String {
    let mut s = String::from("dataset,approach,model,gram,app,rel,nov,com,n\n");
    for (k, row) in &report.correlations {
        let vals: Vec<String> = row.iter().map(|c| c.r.map(|r| r.to_string()).unwrap_or_else(|| NA.into())).collect();
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(&k.dataset), k.approach, csv_field(&k.label), vals.join(","), row[0].n);
    }
    s
}

/// Baseline and feedback-based correlations side by side with their difference.
pub fn render_delta_text(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    let mut footnote = false;
    for ((dataset, label), delta) in &report.deltas {
        rows.push(TextRow::Section(dataset.clone()));
        for approach in [Mode::Baseline, Mode::Strive] {
            let key = GroupKey { dataset: dataset.clone(), approach, label: label.clone() };
            if let Some(row) = report.correlations.get(&key) {
                let (c, u) = corr_cells(row);
                footnote |= u;
                rows.push(TextRow::Data(format!("{label} ({})", approach_title(approach)), c));
            }
        }
        let d = delta.map(|v| match v {
            Some(x) => format!("{x:+.2}"),
            None => {
                footnote = true;
                format!("{NA}*")
            }
        });
        rows.push(TextRow::Data(format!("{label} (Feedback - Baseline)"), d));
    }
    let footnotes = if footnote { vec![UNDEFINED_NOTE.to_string()] } else { Vec::new() };
    TextTable { title: "Correlation change from baseline to feedback-based approach".into(), rows, footnotes }.render()
}

pub fn render_delta_csv(report: &AnalysisReport) -> String {
    let mut s = String::from("dataset,model,gram,app,rel,nov,com\n");
    for ((dataset, label), d) in &report.deltas {
        let vals: Vec<String> = d.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_else(|| NA.into())).collect();
        let _ = writeln!(s, "{},{},{}", csv_field(dataset), csv_field(label), vals.join(","));
    }
    s
}

/// Exact-match table: one row per model and approach, sections per dataset.
pub fn render_match_text(report: &AnalysisReport) -> String {
    let mut rows = Vec::new();
    for dataset in datasets(report) {
        let group: Vec<_> = report.matches.iter().filter(|(k, _)| k.dataset == dataset).collect();
        if group.is_empty() {
            continue;
        }
        rows.push(TextRow::Section(format!("{dataset} (n = {})", group.iter().map(|(_, m)| m.n).max().unwrap_or(0))));
        for (k, m) in group {
            rows.push(TextRow::Data(format!("{} ({})", k.label, approach_title(k.approach)), Metric::ALL.map(|x| fmt2(m.percentage(x)))));
        }
    }
    TextTable { title: "Exact score matches with human ratings (%)".into(), rows, footnotes: Vec::new() }.render()
}

pub fn render_match_csv(report: &AnalysisReport) -> String {
    let mut s = String::from("dataset,approach,model,gram,app,rel,nov,com,n\n");
    for (k, m) in &report.matches {
        let vals: Vec<String> = Metric::ALL.iter().map(|x| m.percentage(*x).to_string()).collect();
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(&k.dataset), k.approach, csv_field(&k.label), vals.join(","), m.n);
    }
    s
}

/// Writes every table to `out_dir` and returns the file paths in write order.
pub fn emit_report(report: &AnalysisReport, out_dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    if report.means.machine.is_empty() && report.correlations.is_empty() && report.matches.is_empty() {
        return arg("nothing to report");
    }
    fs::create_dir_all(out_dir).map_err(|source| AnalysisError::Io { path: out_dir.to_path_buf(), source })?;
    let mut files: Vec<(&str, String)> = vec![
        ("means.csv", render_means_csv(report)),
        ("means.txt", render_means_text(report)),
        ("correlation.csv", render_correlation_csv(report)),
        ("correlation.txt", render_correlation_text(report)),
        ("exact_match.csv", render_match_csv(report)),
        ("exact_match.txt", render_match_text(report)),
    ];
    if !report.deltas.is_empty() {
        files.push(("correlation_delta.csv", render_delta_csv(report)));
        files.push(("correlation_delta.txt", render_delta_text(report)));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|source| AnalysisError::Io { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
