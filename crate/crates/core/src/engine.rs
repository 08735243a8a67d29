//! Baseline scoring and the two-module STRIVE refinement loop.
//!
//! One STRIVE question runs as:
//!
//! 1. iteration 0: TM1 generates `n` critiques with no feedback, its judge
//!    picks the best strength and best weakness and scores the question;
//! 2. iteration k >= 1: TM2 runs the same step with TM1's chosen critique as
//!    feedback, then TM1 runs with TM2's chosen critique as feedback;
//! 3. after each iteration k >= 1 the convergence rule is checked; the loop
//!    stops on convergence or after `max_iterations` iterations.
//!
//! Every request carries a semantic tag (see [`tags`]) so a recorded run can
//! be replayed offline.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::QuestionRecord;
use crate::metrics::MetricScores;
use crate::parse::{self, Critique, JudgeVerdict, ParseError, RepairError};
use crate::prompts::{PromptKit, TemplateError};
use crate::provider::{CompletionRequest, Gateway, ProviderError, MAX_TEMPERATURE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModuleId {
    Tm1,
    Tm2,
}

impl fmt::Display for ModuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModuleId::Tm1 => "tm1",
            ModuleId::Tm2 => "tm2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Strive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Strive => "strive",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "strive" | "feedback" => Ok(Mode::Strive),
            other => Err(format!("unknown mode {other:?} (expected baseline or strive)")),
        }
    }
}

/// When the STRIVE loop may stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceRule {
    /// TM1 and TM2 give identical scores in iteration k and in iteration k-1.
    #[default]
    CrossModule,
    /// Each module repeats its own scores from iteration k-1 in iteration k.
    PerModuleStability,
}

/// Where a critique came from. `candidate_index` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Origin {
    pub module: ModuleId,
    pub iteration: u32,
    pub candidate_index: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwPair {
    pub strength: String,
    pub weakness: String,
    pub origin: Origin,
}

impl SwPair {
    pub fn critique(&self) -> Critique {
        Critique::new(self.strength.clone(), self.weakness.clone())
    }
}

/// The `n` critiques one module produced in one iteration, in candidate order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub module: ModuleId,
    pub iteration: u32,
    pub pairs: Vec<SwPair>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// 1-based lookup.
    pub fn get(&self, index: usize) -> Option<&SwPair> {
        index.checked_sub(1).and_then(|i| self.pairs.get(i))
    }

    pub fn critiques(&self) -> Vec<Critique> {
        self.pairs.iter().map(SwPair::critique).collect()
    }
}

/// Best strength and best weakness as chosen by the judge. The two halves may
/// come from different candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPair {
    pub strength: String,
    pub weakness: String,
    pub strength_origin: Origin,
    pub weakness_origin: Origin,
}

impl BestPair {
    pub fn critique(&self) -> Critique {
        Critique::new(self.strength.clone(), self.weakness.clone())
    }
}

/// Result of one think-and-improve step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmState {
    pub module: ModuleId,
    pub iteration: u32,
    pub candidates: CandidateSet,
    pub verdict: JudgeVerdict,
    pub best: BestPair,
    pub scores: MetricScores,
}

/// One loop iteration. Iteration 0 has no TM2 step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tm2: Option<TmState>,
    pub tm1: TmState,
}

/// Raw exchange for one request tag, including a repair re-ask if one was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub request_tag: String,
    pub model: String,
    pub temperature: f64,
    pub raw_attempts: Vec<String>,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TraceStatus {
    Scored,
    Failed { reason: String },
}

/// Everything recorded about evaluating one question.
///
/// Holds nothing that varies between a live run and its replay (no latencies,
/// no provider kinds); the model behind each call is in [`CallLog::model`]
/// and full provider configs go in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTrace {
    pub question_id: String,
    pub dataset: String,
    pub mode: Mode,
    pub status: TraceStatus,
    pub final_scores: Option<MetricScores>,
    pub converged: bool,
    pub iterations_used: u32,
    pub max_iterations: u32,
    pub convergence_rule: ConvergenceRule,
    pub temperatures: Vec<f64>,
    pub judge_temperature: f64,
    pub template_hashes: BTreeMap<String, String>,
    /// Number of calls that needed a repair re-ask.
    pub repairs: usize,
    pub iterations: Vec<IterationRecord>,
    pub calls: Vec<CallLog>,
}

impl EvaluationTrace {
    pub fn is_scored(&self) -> bool {
        self.status == TraceStatus::Scored
    }

    pub fn failure_reason(&self) -> Option<&str> {
        match &self.status {
            TraceStatus::Failed { reason } => Some(reason),
            TraceStatus::Scored => None,
        }
    }

    /// Re-checks the stored iterations against the recorded convergence
    /// rule: a converged trace must satisfy the rule at its last iteration,
    /// and no earlier iteration may satisfy it.
    pub fn convergence_consistent(&self) -> bool {
        if self.mode == Mode::Baseline {
            return self.converged == self.is_scored();
        }
        let contiguous = self.iterations.iter().enumerate().all(|(i, it)| it.index as usize == i && (i == 0) == it.tm2.is_none());
        if !contiguous || self.iterations_used > self.max_iterations {
            return false;
        }
        let first_hit = (1..self.iterations.len()).find(|&k| converged_at(&self.iterations, k, self.convergence_rule));
        if self.converged {
            let k = self.iterations.len() - 1;
            first_hit == Some(k) && self.iterations_used as usize == k && self.final_scores == Some(self.iterations[k].tm1.scores)
        } else {
            first_hit.is_none()
        }
    }
}

/// Tests the convergence rule at iteration `k` over stored iterations.
/// Iteration 0 carries no TM2 scores, so the earliest possible hit is k = 2.
pub fn converged_at(iterations: &[IterationRecord], k: usize, rule: ConvergenceRule) -> bool {
    if k < 2 || k >= iterations.len() {
        return false;
    }
    let pair = |i: usize| iterations[i].tm2.as_ref().map(|tm2| (iterations[i].tm1.scores, tm2.scores));
    let (Some((v1_now, v2_now)), Some((v1_prev, v2_prev))) = (pair(k), pair(k - 1)) else {
        return false;
    };
    match rule {
        ConvergenceRule::CrossModule => v1_now == v2_now && v1_prev == v2_prev,
        ConvergenceRule::PerModuleStability => v1_now == v1_prev && v2_now == v2_prev,
    }
}

/// Request tags. Every request in a run gets a distinct, stable tag.
pub mod tags {
    use super::ModuleId;

    pub fn baseline(qid: &str) -> String {
        format!("baseline/{qid}")
    }

    pub fn generate(qid: &str, module: ModuleId, iteration: u32, candidate: usize) -> String {
        format!("gen/{qid}/{module}/iter{iteration}/cand{candidate}")
    }

    pub fn regenerate(qid: &str, module: ModuleId, iteration: u32, candidate: usize) -> String {
        format!("{}/regen", generate(qid, module, iteration, candidate))
    }

    pub fn judge(qid: &str, module: ModuleId, iteration: u32) -> String {
        format!("judge/{qid}/{module}/iter{iteration}")
    }

    pub fn repair(tag: &str) -> String {
        format!("{tag}/repair")
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{tag}: {source}")]
    Provider {
        tag: String,
        #[source]
        source: ProviderError,
    },
    #[error("{tag}: reply unreadable after repair ({first}; then {second})")]
    Unparseable { tag: String, first: Box<ParseError>, second: Box<ParseError> },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("invalid limits: {0}")]
    Limits(String),
}

/// Gateways for the four roles. Defaults to one gateway shared by all.
#[derive(Debug, Clone)]
pub struct Providers {
    pub tm1_generator: Arc<Gateway>,
    pub tm1_judge: Arc<Gateway>,
    pub tm2_generator: Arc<Gateway>,
    pub tm2_judge: Arc<Gateway>,
}

impl Providers {
    pub fn uniform(gateway: Arc<Gateway>) -> Self {
        Providers { tm1_generator: gateway.clone(), tm1_judge: gateway.clone(), tm2_generator: gateway.clone(), tm2_judge: gateway }
    }

    fn generator(&self, module: ModuleId) -> &Gateway {
        match module {
            ModuleId::Tm1 => &self.tm1_generator,
            ModuleId::Tm2 => &self.tm2_generator,
        }
    }

    fn judge(&self, module: ModuleId) -> &Gateway {
        match module {
            ModuleId::Tm1 => &self.tm1_judge,
            ModuleId::Tm2 => &self.tm2_judge,
        }
    }
}

/// `n` evenly spaced temperatures from 0.1 to 1.0 inclusive (just 0.1 when
/// `n = 1`), rounded to six decimals.
pub fn default_temperatures(n: usize) -> Vec<f64> {
    const LO: f64 = 0.1;
    const HI: f64 = 1.0;
    if n == 1 {
        return vec![LO];
    }
    (0..n).map(|i| ((LO + (HI - LO) * i as f64 / (n - 1) as f64) * 1e6).round() / 1e6).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_iterations: u32,
    pub n: usize,
    pub temperatures: Vec<f64>,
    pub judge_temperature: f64,
    pub rule: ConvergenceRule,
    pub max_output_tokens: u32,
    /// Issue the `n` generation requests of one step concurrently.
    pub concurrent_candidates: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_iterations: 10,
            n: 10,
            temperatures: default_temperatures(10),
            judge_temperature: 0.0,
            rule: ConvergenceRule::CrossModule,
            max_output_tokens: 1024,
            concurrent_candidates: false,
        }
    }
}

impl Limits {
    /// Limits with `n` candidates on the default schedule for `n`.
    pub fn with_n(n: usize) -> Self {
        Limits { n, temperatures: default_temperatures(n), ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Limits(m));
        if self.max_iterations < 2 {
            return bad(format!("max_iterations must be at least 2, got {}", self.max_iterations));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.temperatures.len() != self.n {
            return bad(format!("{} temperatures given for n = {}", self.temperatures.len(), self.n));
        }
        if let Some(t) = self.temperatures.iter().chain([&self.judge_temperature]).find(|t| !(0.0..=MAX_TEMPERATURE).contains(*t)) {
            return bad(format!("temperature {t} outside [0, {MAX_TEMPERATURE}]"));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Runs baseline and STRIVE evaluations for single questions.
#[derive(Debug, Clone)]
pub struct Evaluator {
    kit: Arc<PromptKit>,
    providers: Providers,
    limits: Limits,
}

impl Evaluator {
    pub fn new(kit: Arc<PromptKit>, providers: Providers, limits: Limits) -> Result<Self, EngineError> {
        limits.validate()?;
        Ok(Evaluator { kit, providers, limits })
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn kit(&self) -> &PromptKit {
        &self.kit
    }

    pub fn providers(&self) -> &Providers {
        &self.providers
    }

    fn empty_trace(&self, record: &QuestionRecord, mode: Mode) -> EvaluationTrace {
        EvaluationTrace {
            question_id: record.id.clone(),
            dataset: record.dataset.clone(),
            mode,
            status: TraceStatus::Scored,
            final_scores: None,
            converged: false,
            iterations_used: 0,
            max_iterations: if mode == Mode::Baseline { 1 } else { self.limits.max_iterations },
            convergence_rule: self.limits.rule,
            temperatures: if mode == Mode::Baseline { Vec::new() } else { self.limits.temperatures.clone() },
            judge_temperature: self.limits.judge_temperature,
            template_hashes: self.kit.hashes(),
            repairs: 0,
            iterations: Vec::new(),
            calls: Vec::new(),
        }
    }

    /// Sends one prompt and parses the reply, with a single repair re-ask.
    fn ask<T>(
        &self,
        gateway: &Gateway,
        tag: &str,
        prompt: &str,
        temperature: f64,
        calls: &mut Vec<CallLog>,
        parser: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, EngineError> {
        let send = |tag: &str, prompt: &str| {
            let mut req = CompletionRequest::new(tag, prompt, temperature);
            req.max_output_tokens = self.limits.max_output_tokens;
            gateway.complete(&req).map_err(|source| EngineError::Provider { tag: tag.to_string(), source })
        };
        let first = send(tag, prompt)?;
        let model = first.provider_model.clone();
        let repair_tag = tags::repair(tag);
        let outcome =
            parse::parse_with_repair(first.text, |suffix| send(&repair_tag, &format!("{prompt}{suffix}")).map(|r| r.text), parser);
        match outcome {
            Ok(done) => {
                calls.push(CallLog {
                    request_tag: tag.to_string(),
                    model,
                    temperature,
                    repaired: done.repaired(),
                    raw_attempts: done.raw_attempts,
                });
                Ok(done.value)
            }
            Err(RepairError::Exhausted { first_error, second_error, raw_attempts }) => {
                calls.push(CallLog { request_tag: tag.to_string(), model, temperature, raw_attempts, repaired: true });
                Err(EngineError::Unparseable { tag: tag.to_string(), first: first_error, second: second_error })
            }
            Err(RepairError::Reask { raw_attempts, source, .. }) => {
                calls.push(CallLog { request_tag: tag.to_string(), model, temperature, raw_attempts, repaired: true });
                Err(source)
            }
        }
    }

    /// One prompt carrying definitions, context and question; one reply with
    /// five scores.
    pub fn baseline_evaluate(&self, record: &QuestionRecord) -> EvaluationTrace {
        let mut trace = self.empty_trace(record, Mode::Baseline);
        let scale = self.kit.scale();
        let result = self.kit.render_baseline_prompt(record).map_err(EngineError::from).and_then(|prompt| {
            self.ask(
                &self.providers.tm1_judge,
                &tags::baseline(&record.id),
                &prompt,
                self.limits.judge_temperature,
                &mut trace.calls,
                |t| parse::parse_scores(t, scale),
            )
        });
        trace.repairs = trace.calls.iter().filter(|c| c.repaired).count();
        match result {
            Ok(scores) => {
                trace.final_scores = Some(scores);
                trace.converged = true;
                trace.iterations_used = 1;
            }
            Err(e) => trace.status = TraceStatus::Failed { reason: e.to_string() },
        }
        trace
    }

    fn generate_one(
        &self,
        record: &QuestionRecord,
        prompt: &str,
        module: ModuleId,
        iteration: u32,
        index: usize,
        calls: &mut Vec<CallLog>,
    ) -> Result<SwPair, EngineError> {
        let temperature = self.limits.temperatures[index - 1];
        let gateway = self.providers.generator(module);
        let tag = tags::generate(&record.id, module, iteration, index);
        let critique = match self.ask(gateway, &tag, prompt, temperature, calls, parse::parse_candidate) {
            Ok(c) => c,
            Err(EngineError::Unparseable { .. }) => {
                let retry = tags::regenerate(&record.id, module, iteration, index);
                self.ask(gateway, &retry, prompt, temperature, calls, parse::parse_candidate)?
            }
            Err(e) => return Err(e),
        };
        Ok(SwPair {
            strength: critique.strength,
            weakness: critique.weakness,
            origin: Origin { module, iteration, candidate_index: index, temperature },
        })
    }

    /// Step (a) of a think-and-improve module: `n` critiques, one per
    /// temperature in the schedule.
    pub fn generate_candidates(
        &self,
        record: &QuestionRecord,
        feedback: Option<&Critique>,
        module: ModuleId,
        iteration: u32,
        calls: &mut Vec<CallLog>,
    ) -> Result<CandidateSet, EngineError> {
        let prompt = self.kit.render_generation_prompt(record, feedback)?;
        let n = self.limits.n;
        let results: Vec<(Result<SwPair, EngineError>, Vec<CallLog>)> = if self.limits.concurrent_candidates && n > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (1..=n)
                    .map(|i| {
                        let prompt = &prompt;
                        scope.spawn(move || {
                            let mut local = Vec::new();
                            (self.generate_one(record, prompt, module, iteration, i, &mut local), local)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("candidate worker panicked")).collect()
            })
        } else {
            let mut out = Vec::with_capacity(n);
            for i in 1..=n {
                let mut local = Vec::new();
                let r = self.generate_one(record, &prompt, module, iteration, i, &mut local);
                let failed = r.is_err();
                out.push((r, local));
                if failed {
                    break;
                }
            }
            out
        };
        let mut pairs = Vec::with_capacity(n);
        for (result, local) in results {
            calls.extend(local);
            pairs.push(result?);
        }
        Ok(CandidateSet { module, iteration, pairs })
    }

    /// Step (b): the judge picks the best strength and best weakness and scores
    /// the question.
    pub fn judge_select(
        &self,
        record: &QuestionRecord,
        candidates: CandidateSet,
        calls: &mut Vec<CallLog>,
    ) -> Result<TmState, EngineError> {
        let critiques = candidates.critiques();
        let prompt = self.kit.render_judge_prompt(record, &critiques)?;
        let count = candidates.len();
        let scale = self.kit.scale();
        let tag = tags::judge(&record.id, candidates.module, candidates.iteration);
        let verdict = self.ask(self.providers.judge(candidates.module), &tag, &prompt, self.limits.judge_temperature, calls, |t| {
            parse::parse_judge_verdict(t, count, scale)
        })?;
        let s = candidates.get(verdict.best_strength_index).expect("index range checked by parser");
        let w = candidates.get(verdict.best_weakness_index).expect("index range checked by parser");
        let best =
            BestPair { strength: s.strength.clone(), weakness: w.weakness.clone(), strength_origin: s.origin, weakness_origin: w.origin };
        Ok(TmState { module: candidates.module, iteration: candidates.iteration, scores: verdict.scores, verdict, best, candidates })
    }

    /// One think-and-improve module: generate then judge.
    pub fn tm_step(
        &self,
        record: &QuestionRecord,
        feedback: Option<&Critique>,
        module: ModuleId,
        iteration: u32,
        calls: &mut Vec<CallLog>,
    ) -> Result<TmState, EngineError> {
        let candidates = self.generate_candidates(record, feedback, module, iteration, calls)?;
        self.judge_select(record, candidates, calls)
    }

    /// Runs the two-module loop. Always returns a trace; failures keep the
    /// iterations completed so far.
    pub fn strive_evaluate(&self, record: &QuestionRecord) -> EvaluationTrace {
        let mut trace = self.empty_trace(record, Mode::Strive);
        if let Err(e) = self.strive_loop(record, &mut trace) {
            trace.status = TraceStatus::Failed { reason: e.to_string() };
            trace.converged = false;
            trace.final_scores = None;
        }
        trace.repairs = trace.calls.iter().filter(|c| c.repaired).count();
        trace
    }

    fn strive_loop(&self, record: &QuestionRecord, trace: &mut EvaluationTrace) -> Result<(), EngineError> {
        let initial = self.tm_step(record, None, ModuleId::Tm1, 0, &mut trace.calls)?;
        trace.iterations.push(IterationRecord { index: 0, tm2: None, tm1: initial });

        for k in 1..=self.limits.max_iterations {
            let tm1_feedback = trace.iterations.last().expect("iteration 0 present").tm1.best.critique();
            let tm2 = self.tm_step(record, Some(&tm1_feedback), ModuleId::Tm2, k, &mut trace.calls)?;
            let tm2_feedback = tm2.best.critique();
            let tm1 = self.tm_step(record, Some(&tm2_feedback), ModuleId::Tm1, k, &mut trace.calls)?;
            trace.iterations.push(IterationRecord { index: k, tm2: Some(tm2), tm1 });
            trace.iterations_used = k;

            if converged_at(&trace.iterations, k as usize, self.limits.rule) {
                trace.converged = true;
                trace.final_scores = Some(trace.iterations[k as usize].tm1.scores);
                return Ok(());
            }
        }
        trace.converged = false;
        trace.final_scores = trace.iterations.last().map(|it| it.tm1.scores);
        Ok(())
    }

    pub fn evaluate(&self, record: &QuestionRecord, mode: Mode) -> EvaluationTrace {
        match mode {
            Mode::Baseline => self.baseline_evaluate(record),
            Mode::Strive => self.strive_evaluate(record),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_is_tenths() {
        assert_eq!(default_temperatures(10), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
        assert_eq!(default_temperatures(1), vec![0.1]);
        assert_eq!(default_temperatures(4), vec![0.1, 0.4, 0.7, 1.0]);
        assert_eq!(Limits::default().temperatures, default_temperatures(10));
    }

    #[test]
    fn limits_validation() {
        assert!(Limits::default().validate().is_ok());
        assert!(Limits { max_iterations: 1, ..Default::default() }.validate().is_err());
        assert!(Limits { n: 3, ..Default::default() }.validate().is_err());
        let mut hot = Limits::with_n(2);
        hot.temperatures[1] = 2.5;
        assert!(hot.validate().is_err());
    }

    #[test]
    fn tag_shapes() {
        assert_eq!(tags::generate("q1", ModuleId::Tm2, 3, 7), "gen/q1/tm2/iter3/cand7");
        assert_eq!(tags::judge("q1", ModuleId::Tm1, 0), "judge/q1/tm1/iter0");
        assert_eq!(tags::repair("baseline/q1"), "baseline/q1/repair");
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("STRIVE".parse::<Mode>().unwrap(), Mode::Strive);
        assert!("both".parse::<Mode>().is_err());
    }
}
