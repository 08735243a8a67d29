//! Offline stand-in for a chat model.
//!
//! Replies are a pure function of `(seed, temperature, prompt)`: the three
//! are hashed into a ChaCha seed and expanded through fixed phrase tables.
//! The reply shape follows the prompt: judge prompts (which ask for
//! `BestStrength`) get a verdict block, generation prompts (which ask for a
//! `Weakness:` section) get a critique, anything else gets a score block.
//!
//! Scores are anchored on the question text so different prompts about the
//! same question mostly agree; about half of all replies nudge one metric by
//! one point. That keeps refinement loops converging some of the time
//! without making agreement certain.

use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest};
use crate::metrics::{MetricScores, Scale};
use crate::parse::{self, JudgeVerdict, BEST_STRENGTH_LABEL};

const STRENGTHS: &[&str] = &[
    "The question is phrased clearly and is grammatically correct.",
    "The question targets the central idea of the passage.",
    "The question asks for an explanation rather than a bare fact.",
    "The question uses vocabulary suited to the intended grade level.",
    "The question can be answered fully from the given context.",
    "The question invites the learner to connect two ideas from the passage.",
    "The question is concise and unambiguous.",
];

const WEAKNESSES: &[&str] = &[
    "The answer can be copied almost verbatim from the context.",
    "The question could be answered without reading the passage.",
    "The wording leaves the expected depth of the answer unclear.",
    "The question only tests recall of a single fact.",
    "The question overlaps heavily with the phrasing of the context.",
    "The question omits a key qualifier present in the passage.",
    "The question is slightly too broad for a short answer.",
];

static SCALE_HINT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"integer from (-?\d+) to (-?\d+)").expect("static regex"));
static CANDIDATE_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^Strength (\d+):").expect("static regex"));

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    model: String,
}

fn rng_for(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Text after the last `Question:` line up to the next blank line; the whole
/// prompt when there is no such line.
fn question_anchor(prompt: &str) -> &str {
    match prompt.rfind("Question:") {
        Some(at) => {
            let rest = &prompt[at..];
            let end = rest.find("\n\n").unwrap_or(rest.len());
            &rest[..end]
        }
        None => prompt,
    }
}

fn scale_hint(prompt: &str) -> Scale {
    SCALE_HINT.captures(prompt).and_then(|c| Scale::new(c[1].parse().ok()?, c[2].parse().ok()?).ok()).unwrap_or_default()
}

impl MockBackend {
    pub fn new(seed: u64, model: impl Into<String>) -> Self {
        MockBackend { seed, model: model.into() }
    }

    fn scores(&self, prompt: &str, rng: &mut ChaCha8Rng) -> MetricScores {
        let scale = scale_hint(prompt);
        let mut anchor = rng_for(self.seed, &[b"anchor", question_anchor(prompt).as_bytes()]);
        // skew toward the top of the scale, like typical rater data
        let mut base = [0i64; 5];
        for v in &mut base {
            let drop = anchor.random_range(0..scale.width().min(3) as i64);
            *v = scale.max - drop;
        }
        let mut scores = MetricScores::from_array(base);
        if rng.random_bool(0.5) {
            let metric = crate::metrics::Metric::ALL[rng.random_range(0..5)];
            let nudged = scores.get(metric) + if rng.random_bool(0.5) { 1 } else { -1 };
            scores.set(metric, nudged.clamp(scale.min, scale.max));
        }
        scores
    }

    fn reply(&self, request: &CompletionRequest) -> String {
        let prompt = request.prompt.as_str();
        let mut rng = rng_for(self.seed, &[&request.temperature.to_bits().to_le_bytes(), prompt.as_bytes()]);
        if prompt.contains(BEST_STRENGTH_LABEL) {
            let count = CANDIDATE_LINE.captures_iter(prompt).filter_map(|c| c[1].parse::<usize>().ok()).max().unwrap_or(1).max(1);
            let verdict = JudgeVerdict {
                best_strength_index: rng.random_range(1..=count),
                best_weakness_index: rng.random_range(1..=count),
                scores: self.scores(prompt, &mut rng),
            };
            format!("The selected critiques are the most specific to the passage.\n\n{}", parse::format_verdict_block(&verdict))
        } else if prompt.contains("Weakness:") {
            let s = STRENGTHS[rng.random_range(0..STRENGTHS.len())];
            let w = WEAKNESSES[rng.random_range(0..WEAKNESSES.len())];
            let note: u16 = rng.random();
            format!("Strength: {s} (note {note:04x})\nWeakness: {w}\n")
        } else {
            let scores = self.scores(prompt, &mut rng);
            format!("The question is reasonable for its context.\n\n{}", parse::format_score_block(&scores))
        }
    }
}

impl CompletionBackend for MockBackend {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError> {
        Ok(BackendReply { text: self.reply(request), model: self.model.clone() })
    }
}
