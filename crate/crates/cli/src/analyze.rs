use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use strive_core::analysis::{self, AnalysisError, RunScores, SampleSpec};
use strive_core::dataset::load_human_ratings;
use strive_core::run::{read_manifest, read_summary, RunLayout};
use strive_core::Scale;

use crate::config::usage;

pub struct AnalyzeOptions {
    pub runs: Vec<PathBuf>,
    pub ratings: PathBuf,
    pub out: PathBuf,
    pub sample: SampleSpec,
}

/// `--match-ids` takes ids separated by commas, or `@file` with one id per line.
pub fn parse_match_ids(values: &[String]) -> anyhow::Result<BTreeSet<String>> {
    let mut ids = BTreeSet::new();
    for v in values {
        if let Some(path) = v.strip_prefix('@') {
            let text = fs::read_to_string(path).with_context(|| format!("reading --match-ids file {path}"))?;
            ids.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
        } else {
            ids.extend(v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from));
        }
    }
    Ok(ids)
}

fn load_run(dir: &Path) -> anyhow::Result<(RunScores, Option<Scale>)> {
    let layout = RunLayout::new(dir);
    let manifest = read_manifest(&layout).with_context(|| format!("--run {}: not a run directory", dir.display()))?;
    let rows = read_summary(&layout.summary()).with_context(|| format!("--run {}: reading summary", dir.display()))?;
    let scale = manifest.config.get("scale").and_then(|v| serde_json::from_value::<Scale>(v.clone()).ok());
    let questions = rows
        .iter()
        .filter(|r| r.mode == manifest.mode)
        .filter_map(|r| r.scores().map(|s| (r.question_id.clone(), r.dataset.clone(), s)))
        .collect();
    Ok((RunScores { label: manifest.label, approach: manifest.mode, questions }, scale))
}

pub fn run(opts: &AnalyzeOptions) -> anyhow::Result<Vec<PathBuf>> {
    if opts.runs.is_empty() {
        return usage("--run: at least one run directory is required");
    }
    let mut runs = Vec::new();
    let mut scale: Option<Scale> = None;
    for dir in &opts.runs {
        let (r, s) = load_run(dir)?;
        if let (Some(a), Some(b)) = (scale, s) {
            if a != b {
                return usage(format!("--run {}: score scale {}-{} differs from {}-{}", dir.display(), b.min, b.max, a.min, a.max));
            }
        }
        scale = scale.or(s);
        runs.push(r);
    }
    let ratings =
        load_human_ratings(&opts.ratings, scale.unwrap_or_default()).with_context(|| format!("--ratings {}", opts.ratings.display()))?;
    let report = match analysis::analyze(&runs, &ratings, &opts.sample) {
        Ok(r) => r,
        Err(AnalysisError::Argument(m)) => return usage(m),
        Err(e) => return Err(e.into()),
    };
    let files = analysis::emit_report(&report, &opts.out)?;
    print!("{}", analysis::render_means_text(&report));
    println!("{}", analysis::render_correlation_text(&report));
    println!("{}", analysis::render_match_text(&report));
    if !report.deltas.is_empty() {
        println!("{}", analysis::render_delta_text(&report));
    }
    Ok(files)
}
