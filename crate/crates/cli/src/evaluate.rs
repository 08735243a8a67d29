use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::Context;
use strive_core::dataset::load_pairs;
use strive_core::engine::{Evaluator, Providers};
use strive_core::provider::{read_transcript, record_transcript, TranscriptRecorder};
use strive_core::run::{self, batch_evaluate, BatchReport, Manifest, Progress, RunLayout};
use strive_core::{Gateway, MetricDefinitionSet, PromptKit, ProviderConfig, QuestionRecord};

use crate::config::{usage, RunConfig};

fn load_records(config: &RunConfig) -> anyhow::Result<Vec<QuestionRecord>> {
    let mut records = Vec::new();
    let mut seen = BTreeMap::new();
    for d in &config.datasets {
        for r in load_pairs(&d.path, &d.tag).with_context(|| format!("loading dataset {}", d.path.display()))? {
            if let Some(prev) = seen.insert(r.id.clone(), d.tag.clone()) {
                return usage(format!("--dataset: question id {:?} appears in both {prev} and {}", r.id, d.tag));
            }
            records.push(r);
        }
    }
    Ok(records)
}

fn prompt_kit(config: &RunConfig) -> anyhow::Result<PromptKit> {
    let definitions = match &config.definitions {
        Some(p) => MetricDefinitionSet::load(p).with_context(|| format!("loading metric definitions {}", p.display()))?,
        None => MetricDefinitionSet::default_for(config.scale),
    };
    Ok(match &config.templates {
        Some(dir) => {
            PromptKit::from_dir(dir, definitions, config.scale).with_context(|| format!("loading templates from {}", dir.display()))?
        }
        None => PromptKit::builtin(config.scale).with_definitions(definitions),
    })
}

/// One gateway per distinct provider config, all feeding one recorder.
fn providers(config: &RunConfig, recorder: Option<&Arc<TranscriptRecorder>>) -> anyhow::Result<Providers> {
    let mut built: Vec<(ProviderConfig, Arc<Gateway>)> = Vec::new();
    let mut get = |c: &ProviderConfig| -> anyhow::Result<Arc<Gateway>> {
        if let Some((_, g)) = built.iter().find(|(k, _)| k == c) {
            return Ok(g.clone());
        }
        let mut g = Gateway::from_config(c)?;
        if let Some(r) = recorder {
            g = g.with_recorder(r.clone());
        }
        let g = Arc::new(g);
        built.push((c.clone(), g.clone()));
        Ok(g)
    };
    let p = &config.providers;
    Ok(Providers {
        tm1_generator: get(&p.tm1_generator)?,
        tm1_judge: get(&p.tm1_judge)?,
        tm2_generator: get(&p.tm2_generator)?,
        tm2_judge: get(&p.tm2_judge)?,
    })
}

fn manifest(config: &RunConfig, kit: &PromptKit) -> Manifest {
    let determinism = if config.any_networked() {
        format!("not reproducible: remote providers are not deterministic; seed {} only governs mock providers and sampling", config.seed)
    } else if config.replay.is_some() {
        "deterministic: all responses are served from the replay transcript".to_string()
    } else {
        format!("deterministic: mock providers seeded with {}", config.seed)
    };
    let hashed = config.hashed();
    Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: config.mode,
        label: config.label.clone(),
        config_hash: run::config_hash(&hashed),
        config: config.persisted(),
        template_hashes: kit.hashes(),
        temperatures: config.temperatures.clone(),
        providers: config.providers.iter().map(|(role, p)| (role.to_string(), p.redacted())).collect(),
        determinism,
    }
}

pub fn run(config: &RunConfig) -> anyhow::Result<BatchReport> {
    let records = load_records(config)?;
    let kit = Arc::new(prompt_kit(config)?);
    let layout = RunLayout::new(&config.run_dir);
    layout.create()?;
    run::prepare_run(&layout, &manifest(config, &kit))?;

    let recorder = if config.record {
        let existing = if layout.transcript().is_file() { read_transcript(&layout.transcript())? } else { Vec::new() };
        Some(Arc::new(TranscriptRecorder::seeded(existing)))
    } else {
        None
    };
    let evaluator = Evaluator::new(kit, providers(config, recorder.as_ref())?, config.limits())?;

    eprintln!("{} question(s), mode {}, run directory {}", records.len(), config.mode, config.run_dir.display());
    let progress = |p: Progress<'_>| {
        eprintln!("[{}/{}] {} {}", p.done, p.total, p.question_id, if p.scored { "scored" } else { "failed" });
    };
    let result = batch_evaluate(&records, &evaluator, config.mode, &layout, config.parallelism, Some(&progress));
    // keep whatever was recorded even if the batch itself errored
    if let Some(r) = &recorder {
        record_transcript(r, &layout.transcript()).with_context(|| format!("writing {}", layout.transcript().display()))?;
    }
    let report = result?;
    eprintln!(
        "done: {} scored, {} failed ({} executed, {} reused from an earlier attempt)",
        report.rows.len() - report.failed,
        report.failed,
        report.executed,
        report.skipped
    );
    for row in report.rows.iter().filter(|r| !r.is_scored()) {
        eprintln!("failed {}: {}", row.question_id, row.failure);
    }
    Ok(report)
}
