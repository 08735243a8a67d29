//! `strive`: score question/context pairs with LLM judges and compare the
//! scores with human ratings.

mod analyze;
mod config;
mod evaluate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};
use strive_core::analysis::SampleSpec;
use strive_core::engine::{ConvergenceRule, Mode};
use strive_core::Scale;

use config::{Overrides, UsageError};

#[derive(Parser)]
#[command(name = "strive", version, about = "Score educational questions with LLM judges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every question in the given datasets.
    Evaluate(EvalArgs),
    /// Re-run an evaluation from a recorded transcript.
    Replay {
        /// Transcript file, or a run directory containing transcript.jsonl.
        transcript: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Compare run scores with human ratings.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Mock,
    Replay,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    /// Both modules agree in two consecutive iterations.
    Cross,
    /// Each module repeats its previous scores.
    Stability,
}

#[derive(Args)]
struct EvalArgs {
    /// TOML config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pair file in JSON Lines, optionally prefixed with a dataset tag (`tag=path`).
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// baseline or strive.
    #[arg(long)]
    mode: Option<Mode>,
    /// Model label used in reports.
    #[arg(long)]
    label: Option<String>,
    /// Provider kind for all roles.
    #[arg(long, value_enum)]
    provider: Option<ProviderArg>,
    #[arg(long)]
    model: Option<String>,
    /// Base URL of an OpenAI-compatible API.
    #[arg(long)]
    endpoint: Option<String>,
    /// Name of the environment variable holding the API token.
    #[arg(long)]
    auth_token_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    requests_per_minute: Option<u32>,
    /// Directory for the response cache.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Seed for mock providers.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidates per module step.
    #[arg(long)]
    n: Option<usize>,
    /// Generation temperatures, one per candidate.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    #[arg(long)]
    judge_temperature: Option<f64>,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long, value_enum)]
    convergence: Option<RuleArg>,
    #[arg(long)]
    max_output_tokens: Option<u32>,
    /// Send the candidate requests of one step concurrently.
    #[arg(long)]
    concurrent_candidates: bool,
    #[arg(long, allow_hyphen_values = true)]
    scale_min: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    scale_max: Option<i64>,
    /// Questions evaluated at once.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Write transcript.jsonl into the run directory (the default).
    #[arg(long, overrides_with = "no_record")]
    record: bool,
    #[arg(long)]
    no_record: bool,
    /// Serve responses from this transcript (file or run directory).
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Directory with template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// JSON file with metric definitions.
    #[arg(long)]
    definitions: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory; repeat for several runs.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    /// CSV with question_id,rater_id,gram,app,rel,nov,com.
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, default_value = "report")]
    out: PathBuf,
    /// Restrict exact-match analysis to a seeded random sample per dataset.
    #[arg(long, conflicts_with = "match_ids")]
    match_sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict exact-match analysis to these ids (comma separated, or @file).
    #[arg(long)]
    match_ids: Vec<String>,
}

impl EvalArgs {
    fn overrides(&self) -> anyhow::Result<Overrides> {
        let mut provider = Map::new();
        let mut set = |k: &str, v: Value| {
            provider.insert(k.to_string(), v);
        };
        if let Some(p) = self.provider {
            let kind = match p {
                ProviderArg::Mock => "mock",
                ProviderArg::Replay => "replay",
                ProviderArg::Http => "http_chat",
            };
            set("kind", kind.into());
        }
        if let Some(v) = &self.model {
            set("model_name", v.as_str().into());
        }
        if let Some(v) = &self.endpoint {
            set("endpoint", v.as_str().into());
        }
        if let Some(v) = &self.auth_token_env {
            set("auth_token_env", v.as_str().into());
        }
        if let Some(v) = self.timeout_secs {
            set("timeout_secs", v.into());
        }
        if let Some(v) = self.max_retries {
            set("max_retries", v.into());
        }
        if let Some(v) = self.requests_per_minute {
            set("requests_per_minute", v.into());
        }
        if let Some(v) = &self.cache_dir {
            set("cache_dir", v.display().to_string().into());
        }
        let scale = match (self.scale_min, self.scale_max) {
            (None, None) => None,
            (lo, hi) => {
                let d = Scale::default();
                match Scale::new(lo.unwrap_or(d.min), hi.unwrap_or(d.max)) {
                    Ok(s) => Some(s),
                    Err(e) => return config::usage(format!("--scale-min/--scale-max: {e}")),
                }
            }
        };
        Ok(Overrides {
            datasets: self.datasets.clone(),
            mode: self.mode,
            label: self.label.clone(),
            provider,
            n: self.n,
            temperatures: self.temperatures.clone(),
            judge_temperature: self.judge_temperature,
            max_iterations: self.max_iterations,
            convergence: self.convergence.map(|r| match r {
                RuleArg::Cross => ConvergenceRule::CrossModule,
                RuleArg::Stability => ConvergenceRule::PerModuleStability,
            }),
            max_output_tokens: self.max_output_tokens,
            concurrent_candidates: self.concurrent_candidates.then_some(true),
            scale,
            parallelism: self.parallelism,
            run_dir: self.run_dir.clone(),
            record: if self.no_record { Some(false) } else { self.record.then_some(true) },
            replay: self.replay.clone(),
            seed: self.seed,
            templates: self.templates.clone(),
            definitions: self.definitions.clone(),
        })
    }
}

fn evaluate(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    let file = match &args.config {
        Some(p) => config::load_file(p)?,
        None => config::FileConfig::default(),
    };
    let config = config::build(file, args.overrides()?)?;
    let report = evaluate::run(&config)?;
    Ok(if report.all_scored() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<ExitCode> {
    let sample = match (args.match_sample, args.match_ids.is_empty()) {
        (Some(k), _) => SampleSpec::Random { k, seed: args.seed },
        (None, false) => SampleSpec::Ids(analyze::parse_match_ids(&args.match_ids)?),
        (None, true) => SampleSpec::All,
    };
    let opts = analyze::AnalyzeOptions { runs: args.runs.clone(), ratings: args.ratings.clone(), out: args.out.clone(), sample };
    for f in analyze::run(&opts)? {
        eprintln!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let mut logger = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"));
    // HTTP client internals log full request URLs, which may carry keys
    for module in ["reqwest", "hyper", "hyper_util", "rustls"] {
        logger.filter_module(module, log::LevelFilter::Warn);
    }
    logger.init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(args) => evaluate(&args),
        Command::Replay { transcript, mut eval } => {
            eval.replay = Some(transcript);
            evaluate(&eval)
        }
        Command::Analyze(args) => analyze(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
