//! Scoring educational questions with LLM judges.
//!
//! Two evaluation modes share one provider layer:
//!
//! * **baseline**: a single prompt carrying the metric definitions, context,
//!   and question returns five scores.
//! * **STRIVE**: two think-and-improve modules (TM1, TM2) each generate
//!   strength/weakness critiques at several temperatures, let a judge pick the
//!   best strength and best weakness and score the question, then hand the
//!   chosen critique to the other module as feedback. The loop stops once both
//!   modules give identical scores in two consecutive iterations.
//!
//! The [`analysis`] module compares machine scores with human ratings
//! (means, Pearson correlation, exact-match rates).

pub mod analysis;
pub mod dataset;
pub mod engine;
pub mod metrics;
pub mod parse;
pub mod prompts;
pub mod provider;
pub mod run;

pub use dataset::{HumanRating, QuestionRecord};
pub use metrics::{Metric, MetricScores, Scale};
pub use parse::{Critique, JudgeVerdict, ParseError};
pub use prompts::{MetricDefinitionSet, PromptKit};
pub use provider::{CompletionRequest, CompletionResponse, Gateway, ProviderConfig, ProviderError, ProviderKind};
