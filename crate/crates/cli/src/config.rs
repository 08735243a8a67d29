//! Effective run configuration: flags over config file over defaults.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use strive_core::engine::{default_temperatures, ConvergenceRule, Limits, Mode};
use strive_core::provider::{ProviderConfig, ProviderKind};
use strive_core::Scale;

/// A configuration problem the user can fix; reported as a usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

pub const ROLES: [&str; 4] = ["tm1_generator", "tm1_judge", "tm2_generator", "tm2_judge"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub tag: String,
    pub path: PathBuf,
}

impl DatasetSpec {
    /// `tag=path`, or a bare path tagged with its file stem.
    pub fn parse(s: &str) -> DatasetSpec {
        if let Some((tag, path)) = s.split_once('=') {
            if !tag.is_empty() && !tag.contains(['/', '\\']) {
                return DatasetSpec { tag: tag.to_string(), path: PathBuf::from(path) };
            }
        }
        let path = PathBuf::from(s);
        let tag = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dataset".into());
        DatasetSpec { tag, path }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleProviders {
    pub tm1_generator: ProviderConfig,
    pub tm1_judge: ProviderConfig,
    pub tm2_generator: ProviderConfig,
    pub tm2_judge: ProviderConfig,
}

impl RoleProviders {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &ProviderConfig)> {
        ROLES.into_iter().zip([&self.tm1_generator, &self.tm1_judge, &self.tm2_generator, &self.tm2_judge])
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut ProviderConfig> {
        [&mut self.tm1_generator, &mut self.tm1_judge, &mut self.tm2_generator, &mut self.tm2_judge].into_iter()
    }
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub datasets: Vec<DatasetSpec>,
    pub mode: Mode,
    pub label: String,
    pub providers: RoleProviders,
    pub n: usize,
    pub temperatures: Vec<f64>,
    pub judge_temperature: f64,
    pub max_iterations: u32,
    pub convergence: ConvergenceRule,
    pub max_output_tokens: u32,
    pub concurrent_candidates: bool,
    pub scale: Scale,
    pub parallelism: usize,
    pub run_dir: PathBuf,
    pub record: bool,
    pub replay: Option<PathBuf>,
    pub seed: u64,
    pub templates: Option<PathBuf>,
    pub definitions: Option<PathBuf>,
}

impl RunConfig {
    pub fn limits(&self) -> Limits {
        Limits {
            max_iterations: self.max_iterations,
            n: self.n,
            temperatures: self.temperatures.clone(),
            judge_temperature: self.judge_temperature,
            rule: self.convergence,
            max_output_tokens: self.max_output_tokens,
            concurrent_candidates: self.concurrent_candidates,
        }
    }

    /// The configuration as persisted: provider endpoints redacted.
    pub fn persisted(&self) -> Value {
        let mut c = self.clone();
        for p in c.providers.iter_mut() {
            *p = p.redacted();
        }
        serde_json::to_value(&c).expect("config serializes")
    }

    /// Fields that may change between a run and its resumption without
    /// changing any output.
    pub fn hashed(&self) -> Value {
        let mut v = self.persisted();
        if let Value::Object(m) = &mut v {
            m.remove("parallelism");
            m.remove("run_dir");
        }
        v
    }

    pub fn any_networked(&self) -> bool {
        self.providers.iter().any(|(_, p)| p.kind == ProviderKind::HttpChat)
    }
}

/// Values from the command line; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub datasets: Vec<String>,
    pub mode: Option<Mode>,
    pub label: Option<String>,
    pub provider: Map<String, Value>,
    pub n: Option<usize>,
    pub temperatures: Option<Vec<f64>>,
    pub judge_temperature: Option<f64>,
    pub max_iterations: Option<u32>,
    pub convergence: Option<ConvergenceRule>,
    pub max_output_tokens: Option<u32>,
    pub concurrent_candidates: Option<bool>,
    pub scale: Option<Scale>,
    pub parallelism: Option<usize>,
    pub run_dir: Option<PathBuf>,
    pub record: Option<bool>,
    pub replay: Option<PathBuf>,
    pub seed: Option<u64>,
    pub templates: Option<PathBuf>,
    pub definitions: Option<PathBuf>,
}

/// Config file contents. Provider tables stay loose so that a role table
/// only has to name the fields it changes.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    datasets: Vec<FileDataset>,
    mode: Option<Mode>,
    label: Option<String>,
    #[serde(default)]
    provider: Map<String, Value>,
    #[serde(default)]
    providers: Map<String, Value>,
    n: Option<usize>,
    temperatures: Option<Vec<f64>>,
    judge_temperature: Option<f64>,
    max_iterations: Option<u32>,
    convergence: Option<ConvergenceRule>,
    max_output_tokens: Option<u32>,
    concurrent_candidates: Option<bool>,
    scale: Option<Scale>,
    parallelism: Option<usize>,
    run_dir: Option<PathBuf>,
    record: Option<bool>,
    replay: Option<PathBuf>,
    seed: Option<u64>,
    templates: Option<PathBuf>,
    definitions: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FileDataset {
    Path(String),
    Tagged { tag: String, path: PathBuf },
}

pub fn load_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    match toml::from_str(&text) {
        Ok(c) => Ok(c),
        Err(e) => usage(format!("invalid config file {}: {e}", path.display())),
    }
}

fn overlay(base: &mut Map<String, Value>, top: &Map<String, Value>) {
    for (k, v) in top {
        base.insert(k.clone(), v.clone());
    }
}

/// Resolves `--replay` targets: a run directory, a transcript file, or a
/// transcript path given without its extension.
pub fn resolve_transcript(path: &Path) -> anyhow::Result<PathBuf> {
    if path.is_dir() {
        return Ok(path.join(strive_core::run::TRANSCRIPT_FILE));
    }
    if path.is_file() {
        return Ok(path.to_path_buf());
    }
    let with_ext = path.with_extension("jsonl");
    if with_ext.is_file() {
        return Ok(with_ext);
    }
    usage(format!("--replay: transcript {} not found", path.display()))
}

/// Merges defaults, the config file, and flags, then checks consistency.
pub fn build(file: FileConfig, flags: Overrides) -> anyhow::Result<RunConfig> {
    let datasets: Vec<DatasetSpec> = if flags.datasets.is_empty() {
        file.datasets
            .into_iter()
            .map(|d| match d {
                FileDataset::Path(p) => DatasetSpec::parse(&p),
                FileDataset::Tagged { tag, path } => DatasetSpec { tag, path },
            })
            .collect()
    } else {
        flags.datasets.iter().map(|s| DatasetSpec::parse(s)).collect()
    };
    if datasets.is_empty() {
        return usage("--dataset: at least one dataset is required");
    }
    for d in &datasets {
        if !d.path.is_file() {
            return usage(format!("--dataset: file {} not found", d.path.display()));
        }
    }

    let mode = flags.mode.or(file.mode).unwrap_or(Mode::Strive);
    let seed = flags.seed.or(file.seed).unwrap_or(0);
    let replay = match flags.replay.or(file.replay) {
        Some(p) => Some(resolve_transcript(&p)?),
        None => None,
    };

    let mut providers = Vec::new();
    for role in ROLES {
        let Value::Object(mut merged) = serde_json::to_value(ProviderConfig::default()).expect("serializes") else {
            unreachable!("provider config is an object")
        };
        overlay(&mut merged, &file.provider);
        match file.providers.get(role) {
            Some(Value::Object(t)) => overlay(&mut merged, t),
            Some(_) => return usage(format!("providers.{role}: must be a table")),
            None => {}
        }
        overlay(&mut merged, &flags.provider);
        let mut config: ProviderConfig = match serde_json::from_value(Value::Object(merged)) {
            Ok(c) => c,
            Err(e) => return usage(format!("provider ({role}): {e}")),
        };
        if config.kind == ProviderKind::Mock {
            config.seed = seed;
        }
        if let Some(t) = &replay {
            config = ProviderConfig { max_retries: config.max_retries, ..ProviderConfig::replay(t.clone()) };
        }
        if let Err(e) = config.validate() {
            return usage(format!("provider ({role}): {e}"));
        }
        providers.push(config);
    }
    let [tm1_generator, tm1_judge, tm2_generator, tm2_judge]: [ProviderConfig; 4] = providers.try_into().expect("four roles");
    let providers = RoleProviders { tm1_generator, tm1_judge, tm2_generator, tm2_judge };

    let n = flags.n.or(file.n).unwrap_or(10);
    if n == 0 {
        return usage("--n: must be at least 1");
    }
    let temperatures = flags.temperatures.or(file.temperatures).unwrap_or_else(|| default_temperatures(n));
    if temperatures.len() != n {
        return usage(format!("--temperatures: {} values given for --n {n}", temperatures.len()));
    }
    let max_iterations = flags.max_iterations.or(file.max_iterations).unwrap_or(10);
    if mode == Mode::Strive && max_iterations < 2 {
        return usage("--max-iterations: must be at least 2 in strive mode");
    }
    let parallelism = flags.parallelism.or(file.parallelism).unwrap_or(1);
    if parallelism == 0 {
        return usage("--parallelism: must be at least 1");
    }
    let scale = flags.scale.or(file.scale).unwrap_or_default();
    if let Err(e) = Scale::new(scale.min, scale.max) {
        return usage(format!("--scale: {e}"));
    }

    let label = match flags.label.or(file.label) {
        Some(l) => l,
        None => default_label(&providers.tm1_judge)?,
    };
    let run_dir = flags.run_dir.or(file.run_dir).unwrap_or_else(|| PathBuf::from("runs").join(format!("{mode}-{}", sanitize(&label))));

    let config = RunConfig {
        datasets,
        mode,
        label,
        providers,
        n,
        temperatures,
        judge_temperature: flags.judge_temperature.or(file.judge_temperature).unwrap_or(0.0),
        max_iterations,
        convergence: flags.convergence.or(file.convergence).unwrap_or_default(),
        max_output_tokens: flags.max_output_tokens.or(file.max_output_tokens).unwrap_or(1024),
        concurrent_candidates: flags.concurrent_candidates.or(file.concurrent_candidates).unwrap_or(false),
        scale,
        parallelism,
        run_dir,
        record: flags.record.or(file.record).unwrap_or(true),
        replay,
        seed,
        templates: flags.templates.or(file.templates),
        definitions: flags.definitions.or(file.definitions),
    };
    if let Err(e) = config.limits().validate() {
        return usage(e.to_string());
    }
    Ok(config)
}

/// Replay runs take the model name recorded in the transcript.
fn default_label(judge: &ProviderConfig) -> anyhow::Result<String> {
    if judge.kind == ProviderKind::Replay {
        let path = judge.transcript.as_deref().expect("validated");
        let entries = strive_core::provider::read_transcript(path)?;
        if let Some(model) = entries.iter().find_map(|e| e.model.clone()) {
            return Ok(model);
        }
    }
    Ok(judge.model_name.clone())
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}
