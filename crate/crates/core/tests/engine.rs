use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use strive_core::engine::{ConvergenceRule, Evaluator, Limits, Mode, ModuleId, Providers, TraceStatus};
use strive_core::parse::{self, Critique};
use strive_core::provider::{BackendError, BackendReply, CompletionBackend, CompletionRequest, TranscriptRecorder};
use strive_core::{Gateway, MetricScores, PromptKit, ProviderConfig, QuestionRecord, Scale};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn record(id: &str) -> QuestionRecord {
    QuestionRecord {
        id: id.into(),
        dataset: "eduprobe".into(),
        subject: Some("Geography".into()),
        context: "Black soil is ideal for growing cotton because it retains moisture.".into(),
        question: "Why is black soil suited to cotton cultivation?".into(),
    }
}

fn replay_evaluator(name: &str, limits: Limits) -> Evaluator {
    let gw = Gateway::from_config(&ProviderConfig::replay(fixture(name))).unwrap();
    Evaluator::new(Arc::new(PromptKit::builtin(Scale::default())), Providers::uniform(Arc::new(gw)), limits).unwrap()
}

fn mock_evaluator(seed: u64, limits: Limits) -> Evaluator {
    let gw = Gateway::from_config(&ProviderConfig::mock(seed)).unwrap();
    Evaluator::new(Arc::new(PromptKit::builtin(Scale::default())), Providers::uniform(Arc::new(gw)), limits).unwrap()
}

fn two_candidates(max_iterations: u32) -> Limits {
    Limits { max_iterations, ..Limits::with_n(2) }
}

#[test]
fn converges_when_modules_agree_in_iterations_two_and_three() {
    let ev = replay_evaluator("strive_converge_iter3.jsonl", two_candidates(10));
    let trace = ev.strive_evaluate(&record("q1"));
    assert_eq!(trace.status, TraceStatus::Scored, "{:?}", trace.failure_reason());
    assert!(trace.converged);
    assert_eq!(trace.iterations_used, 3);
    assert_eq!(trace.final_scores, Some(MetricScores::new(5, 4, 4, 3, 3)));
    assert_eq!(trace.iterations.len(), 4);
    assert!(trace.convergence_consistent());
}

#[test]
fn never_agreeing_run_stops_at_cap_with_last_tm1_scores() {
    let ev = replay_evaluator("strive_never_agree.jsonl", two_candidates(5));
    let trace = ev.strive_evaluate(&record("q1"));
    assert!(trace.is_scored(), "{:?}", trace.failure_reason());
    assert!(!trace.converged);
    assert_eq!(trace.iterations_used, 5);
    assert_eq!(trace.final_scores, Some(MetricScores::new(4, 4, 4, 3, 2)));
    assert!(trace.convergence_consistent());
}

#[test]
fn earliest_convergence_with_two_iterations() {
    let ev = replay_evaluator("strive_converge_earliest.jsonl", two_candidates(2));
    let trace = ev.strive_evaluate(&record("q1"));
    assert!(trace.converged);
    assert_eq!(trace.iterations_used, 2);
    assert_eq!(trace.final_scores, Some(MetricScores::new(4, 4, 4, 3, 3)));
}

#[test]
fn stability_rule_is_selectable() {
    let limits = Limits { rule: ConvergenceRule::PerModuleStability, ..two_candidates(10) };
    let trace = replay_evaluator("strive_converge_iter3.jsonl", limits).strive_evaluate(&record("q1"));
    assert!(trace.converged);
    assert_eq!(trace.iterations_used, 3);
    assert_eq!(trace.convergence_rule, ConvergenceRule::PerModuleStability);
    assert!(trace.convergence_consistent());
}

#[test]
fn feedback_flows_between_modules() {
    let ev = replay_evaluator("strive_converge_iter3.jsonl", two_candidates(10));
    let trace = ev.strive_evaluate(&record("q1"));
    // fixture judges always pick strength 1 and weakness 2
    let it1 = &trace.iterations[1];
    let tm2 = it1.tm2.as_ref().unwrap();
    assert_eq!(tm2.best.strength, "tm2 iteration 1 candidate 1 strength.");
    assert_eq!(tm2.best.weakness, "tm2 iteration 1 candidate 2 weakness.");
    assert_eq!(tm2.best.strength_origin.candidate_index, 1);
    assert_eq!(tm2.best.weakness_origin.candidate_index, 2);
    assert_eq!(tm2.best.weakness_origin.temperature, 1.0);
    // membership: every best half is one of that step's candidates
    for it in &trace.iterations {
        for st in std::iter::once(&it.tm1).chain(it.tm2.as_ref()) {
            assert!(st.candidates.pairs.iter().any(|p| p.strength == st.best.strength));
            assert!(st.candidates.pairs.iter().any(|p| p.weakness == st.best.weakness));
            assert_eq!(st.candidates.iteration, it.index);
        }
    }
    assert_eq!(trace.temperatures, vec![0.1, 1.0]);
}

#[test]
fn judge_composes_strength_two_with_weakness_five() {
    let ev = replay_evaluator("judge_compose.jsonl", Limits::default());
    let rec = record("q1");
    let mut calls = Vec::new();
    let cands = ev.generate_candidates(&rec, None, ModuleId::Tm1, 0, &mut calls).unwrap();
    assert_eq!(cands.len(), 10);
    let temps: Vec<f64> = cands.pairs.iter().map(|p| p.origin.temperature).collect();
    assert_eq!(temps, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    let state = ev.judge_select(&rec, cands, &mut calls).unwrap();
    assert_eq!(state.best.strength, "tm1 iteration 0 candidate 2 strength.");
    assert_eq!(state.best.weakness, "tm1 iteration 0 candidate 5 weakness.");
    assert_eq!(state.scores, MetricScores::new(4, 4, 4, 3, 3));
    assert_eq!(calls.len(), 11);
}

#[test]
fn replay_gives_identical_candidate_texts() {
    let ev = replay_evaluator("judge_compose.jsonl", Limits::default());
    let a = ev.generate_candidates(&record("q1"), None, ModuleId::Tm1, 0, &mut Vec::new()).unwrap();
    let b = ev.generate_candidates(&record("q1"), None, ModuleId::Tm1, 0, &mut Vec::new()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn baseline_replay_and_failure_paths() {
    let gw = Gateway::from_config(&ProviderConfig::replay(fixture("baseline.jsonl"))).unwrap();
    let ev = Evaluator::new(Arc::new(PromptKit::builtin(Scale::default())), Providers::uniform(Arc::new(gw)), Limits::default()).unwrap();

    let ok = ev.baseline_evaluate(&record("q1"));
    assert_eq!(ok.final_scores, Some(MetricScores::new(5, 4, 4, 3, 3)));
    assert!(ok.converged);
    assert_eq!(ok.iterations_used, 1);
    assert_eq!(ok.mode, Mode::Baseline);
    assert_eq!(ok.repairs, 0);

    let failed = ev.baseline_evaluate(&record("q2"));
    assert!(!failed.is_scored());
    assert!(failed.final_scores.is_none());
    assert_eq!(failed.calls.len(), 1);
    assert_eq!(failed.calls[0].raw_attempts.len(), 2);
    assert!(failed.failure_reason().unwrap().contains("baseline/q2"));

    let repaired = ev.baseline_evaluate(&record("q3"));
    assert_eq!(repaired.final_scores, Some(MetricScores::new(4, 4, 3, 3, 2)));
    assert_eq!(repaired.repairs, 1);
    assert!(repaired.calls[0].repaired);
}

#[test]
fn replay_miss_fails_question_with_partial_trace() {
    // fixture has no iteration 4 entries; never converging forces a miss
    let ev = replay_evaluator("strive_never_agree.jsonl", two_candidates(6));
    let trace = ev.strive_evaluate(&record("q1"));
    assert!(!trace.is_scored());
    assert!(trace.failure_reason().unwrap().contains("gen/q1/tm2/iter6/cand1"));
    assert_eq!(trace.iterations.len(), 6);
    assert_eq!(trace.iterations_used, 5);
    assert!(!trace.converged);
}

#[test]
fn mock_runs_are_deterministic() {
    let a = mock_evaluator(7, Limits::default()).strive_evaluate(&record("q9"));
    let b = mock_evaluator(7, Limits::default()).strive_evaluate(&record("q9"));
    assert_eq!(a, b);
    assert!(a.convergence_consistent());
    let base_a = mock_evaluator(7, Limits::default()).baseline_evaluate(&record("q9"));
    let base_b = mock_evaluator(7, Limits::default()).baseline_evaluate(&record("q9"));
    assert_eq!(base_a.final_scores, base_b.final_scores);
    assert!(base_a.final_scores.is_some());
}

#[test]
fn concurrent_candidates_match_sequential() {
    let seq = mock_evaluator(11, Limits::default()).strive_evaluate(&record("q2"));
    let par = mock_evaluator(11, Limits { concurrent_candidates: true, ..Limits::default() }).strive_evaluate(&record("q2"));
    assert_eq!(seq, par);
}

#[test]
fn single_candidate_mode() {
    let ev = mock_evaluator(5, Limits::with_n(1));
    let trace = ev.strive_evaluate(&record("q3"));
    assert!(trace.is_scored());
    for it in &trace.iterations {
        assert_eq!(it.tm1.candidates.len(), 1);
        assert_eq!(it.tm1.verdict.best_strength_index, 1);
        assert_eq!(it.tm1.best.strength, it.tm1.candidates.pairs[0].strength);
    }
}

/// Captures prompts so feedback threading can be checked.
struct PromptSpy {
    inner: strive_core::provider::MockBackend,
    prompts: Arc<Mutex<Vec<(String, String)>>>,
}

impl CompletionBackend for PromptSpy {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        self.prompts.lock().unwrap().push((request.request_tag.clone(), request.prompt.clone()));
        self.inner.call(request)
    }
}

#[test]
fn generation_prompts_carry_feedback_only_after_first_step() {
    let prompts = Arc::new(Mutex::new(Vec::new()));
    let spy = PromptSpy { inner: strive_core::provider::MockBackend::new(3, "mock"), prompts: prompts.clone() };
    let gw = Gateway::with_backend(ProviderConfig::mock(3), Box::new(spy)).unwrap();
    let ev = Evaluator::new(
        Arc::new(PromptKit::builtin(Scale::default())),
        Providers::uniform(Arc::new(gw)),
        Limits { max_iterations: 2, ..Limits::with_n(2) },
    )
    .unwrap();
    let trace = ev.strive_evaluate(&record("q1"));
    let prompts = prompts.lock().unwrap();
    let find = |tag: &str| prompts.iter().find(|(t, _)| t == tag).map(|(_, p)| p.clone()).unwrap();
    assert!(!find("gen/q1/tm1/iter0/cand1").contains("Previous strength"));
    let tm1_best = &trace.iterations[0].tm1.best;
    let tm2_prompt = find("gen/q1/tm2/iter1/cand1");
    assert!(tm2_prompt.contains(&tm1_best.strength));
    assert!(tm2_prompt.contains(&tm1_best.weakness));
    let tm2_best = &trace.iterations[1].tm2.as_ref().unwrap().best;
    let tm1_prompt = find("gen/q1/tm1/iter1/cand1");
    assert!(tm1_prompt.contains(&tm2_best.strength));
    assert!(tm1_prompt.contains(&tm2_best.weakness));
    let kit = PromptKit::builtin(Scale::default());
    assert_eq!(
        tm1_prompt,
        kit.render_generation_prompt(&record("q1"), Some(&Critique::new(tm2_best.strength.clone(), tm2_best.weakness.clone()))).unwrap()
    );
}

/// Generator that fails to produce a parseable critique for one slot on its
/// first request, including the repair.
struct FlakySlot {
    inner: strive_core::provider::MockBackend,
}

impl CompletionBackend for FlakySlot {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        if request.request_tag.starts_with("gen/q1/tm1/iter0/cand2") && !request.request_tag.contains("/regen") {
            return Ok(BackendReply { text: "I cannot decide.".into(), model: "flaky".into() });
        }
        self.inner.call(request)
    }
}

#[test]
fn unparseable_slot_is_regenerated_once() {
    let gw =
        Gateway::with_backend(ProviderConfig::mock(1), Box::new(FlakySlot { inner: strive_core::provider::MockBackend::new(1, "mock") }))
            .unwrap();
    let ev = Evaluator::new(Arc::new(PromptKit::builtin(Scale::default())), Providers::uniform(Arc::new(gw)), Limits::with_n(3)).unwrap();
    let mut calls = Vec::new();
    let set = ev.generate_candidates(&record("q1"), None, ModuleId::Tm1, 0, &mut calls).unwrap();
    assert_eq!(set.len(), 3);
    let tags: Vec<&str> = calls.iter().map(|c| c.request_tag.as_str()).collect();
    assert_eq!(tags, ["gen/q1/tm1/iter0/cand1", "gen/q1/tm1/iter0/cand2", "gen/q1/tm1/iter0/cand2/regen", "gen/q1/tm1/iter0/cand3"]);
    assert_eq!(set.pairs[1].origin.temperature, Limits::with_n(3).temperatures[1]);
    assert_eq!(set.pairs[1].origin.candidate_index, 2);
}

#[test]
fn recorded_mock_run_replays_identically() {
    let rec = Arc::new(TranscriptRecorder::default());
    let gw = Gateway::from_config(&ProviderConfig::mock(21)).unwrap().with_recorder(rec.clone());
    let kit = Arc::new(PromptKit::builtin(Scale::default()));
    let live = Evaluator::new(kit.clone(), Providers::uniform(Arc::new(gw)), Limits::default()).unwrap().strive_evaluate(&record("q4"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("transcript.jsonl");
    strive_core::provider::record_transcript(&rec, &path).unwrap();
    let replay_gw = Gateway::from_config(&ProviderConfig::replay(&path)).unwrap();
    let replayed = Evaluator::new(kit, Providers::uniform(Arc::new(replay_gw)), Limits::default()).unwrap().strive_evaluate(&record("q4"));
    assert_eq!(live, replayed);
    assert_eq!(serde_json::to_string(&live).unwrap(), serde_json::to_string(&replayed).unwrap());
}

#[test]
fn tampered_transcript_changes_outcome() {
    let rec = Arc::new(TranscriptRecorder::default());
    let gw = Gateway::from_config(&ProviderConfig::mock(2)).unwrap().with_recorder(rec.clone());
    let kit = Arc::new(PromptKit::builtin(Scale::default()));
    let live = Evaluator::new(kit.clone(), Providers::uniform(Arc::new(gw)), Limits::default()).unwrap().baseline_evaluate(&record("q5"));

    let mut entries = rec.entries();
    let original = live.final_scores.unwrap();
    let mut edited = original;
    edited.gram = if original.gram == 1 { 2 } else { 1 };
    entries[0].response_text = parse::format_score_block(&edited);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    strive_core::provider::record_transcript(&TranscriptRecorder::seeded(entries), &path).unwrap();
    let replayed =
        Evaluator::new(kit, Providers::uniform(Arc::new(Gateway::from_config(&ProviderConfig::replay(&path)).unwrap())), Limits::default())
            .unwrap()
            .baseline_evaluate(&record("q5"));
    assert_eq!(replayed.final_scores, Some(edited));
    assert_ne!(replayed, live);
}
