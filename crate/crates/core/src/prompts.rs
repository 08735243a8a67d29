//! Prompt templates and metric definitions.
//!
//! Templates are plain text with `{name}` placeholders. The shipped defaults
//! live in `assets/templates/` and can be replaced by a directory holding
//! files of the same names. Every template is identified in traces by its id
//! and the SHA-256 of its body.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::QuestionRecord;
use crate::metrics::{Metric, Scale};
use crate::parse::{self, Critique};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Baseline,
    Generate,
    /// Feedback block spliced into the generation prompt after the first handoff.
    GenerateFeedback,
    Judge,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [TemplateId::Baseline, TemplateId::Generate, TemplateId::GenerateFeedback, TemplateId::Judge];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::Baseline => "baseline.txt",
            TemplateId::Generate => "generate.txt",
            TemplateId::GenerateFeedback => "generate_feedback.txt",
            TemplateId::Judge => "judge.txt",
        }
    }

    fn default_body(self) -> &'static str {
        match self {
            TemplateId::Baseline => include_str!("../assets/templates/baseline.txt"),
            TemplateId::Generate => include_str!("../assets/templates/generate.txt"),
            TemplateId::GenerateFeedback => include_str!("../assets/templates/generate_feedback.txt"),
            TemplateId::Judge => include_str!("../assets/templates/judge.txt"),
        }
    }

    /// Placeholders the template must contain. Any other placeholder is an error.
    fn required(self) -> &'static [&'static str] {
        match self {
            TemplateId::Baseline => &["metric_definitions", "context", "question", "output_format"],
            TemplateId::Generate => &["metric_definitions", "context", "question", "feedback_section", "output_format"],
            TemplateId::GenerateFeedback => &["strength", "weakness"],
            TemplateId::Judge => &["metric_definitions", "context", "question", "candidates", "output_format"],
        }
    }

    fn optional(self) -> &'static [&'static str] {
        match self {
            TemplateId::Judge => &["candidate_count"],
            _ => &[],
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".txt"))
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template} has no binding for placeholder {{{name}}}")]
    Unbound { template: TemplateId, name: String },
    #[error("template {template} is missing required placeholder {{{name}}}")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("template {template} uses unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: TemplateId, name: String },
    #[error("metric definitions: {0}")]
    Definitions(String),
    #[error("judge prompt needs at least one candidate")]
    NoCandidates,
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

fn is_placeholder_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn split_pieces(body: &str) -> Vec<Piece> {
    let mut pieces = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                text.push_str(&rest[..open]);
                if !text.is_empty() {
                    pieces.push(Piece::Text(std::mem::take(&mut text)));
                }
                pieces.push(Piece::Slot(after[..close].to_string()));
                rest = &after[close + 1..];
            }
            _ => {
                text.push_str(&rest[..=open]);
                rest = after;
            }
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    pieces
}

/// A parsed template. Braces that do not enclose a lower-case identifier are
/// literal text.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    id: TemplateId,
    body: String,
    pieces: Vec<Piece>,
    placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(id: TemplateId, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let pieces = split_pieces(&body);
        let placeholders: BTreeSet<String> = pieces
            .iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.clone()),
                Piece::Text(_) => None,
            })
            .collect();
        for name in id.required() {
            if !placeholders.contains(*name) {
                return Err(TemplateError::MissingPlaceholder { template: id, name: name.to_string() });
            }
        }
        if let Some(extra) = placeholders.iter().find(|p| !id.required().contains(&p.as_str()) && !id.optional().contains(&p.as_str())) {
            return Err(TemplateError::UnknownPlaceholder { template: id, name: extra.clone() });
        }
        Ok(PromptTemplate { id, body, pieces, placeholders })
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    /// Substitutes every placeholder in one pass. Bound values are inserted
    /// verbatim and never rescanned.
    pub fn render(&self, bindings: &HashMap<&str, &str>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + bindings.values().map(|v| v.len()).sum::<usize>());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => {
                    let value =
                        bindings.get(name.as_str()).ok_or_else(|| TemplateError::Unbound { template: self.id, name: name.clone() })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

/// Definition text for one metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDefinition {
    pub metric: Metric,
    pub name: String,
    pub definition: String,
    pub scale: String,
}

/// Exactly one non-empty definition per metric, held in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MetricDefinitionSet {
    defs: Vec<MetricDefinition>,
}

impl MetricDefinitionSet {
    pub fn new(defs: Vec<MetricDefinition>) -> Result<Self, TemplateError> {
        let mut by_metric: BTreeMap<Metric, MetricDefinition> = BTreeMap::new();
        for d in defs {
            if d.definition.trim().is_empty() {
                return Err(TemplateError::Definitions(format!("{} has an empty definition", d.metric)));
            }
            let metric = d.metric;
            if by_metric.insert(metric, d).is_some() {
                return Err(TemplateError::Definitions(format!("{metric} is defined more than once")));
            }
        }
        if let Some(missing) = Metric::ALL.iter().find(|m| !by_metric.contains_key(m)) {
            return Err(TemplateError::Definitions(format!("{missing} is not defined")));
        }
        Ok(MetricDefinitionSet { defs: by_metric.into_values().collect() })
    }

    /// Built-in definitions on the given scale.
    pub fn default_for(scale: Scale) -> Self {
        let (lo, hi) = (scale.min, scale.max);
        let entry = |metric: Metric, definition: &str, low: &str, high: &str| MetricDefinition {
            metric,
            name: metric.full_name().to_string(),
            definition: definition.to_string(),
            scale: format!("{lo} = {low}; {hi} = {high}"),
        };
        let defs = vec![
            entry(
                Metric::Gram,
                "Whether the question is grammatically well formed: correct syntax, spelling, punctuation and word \
                 choice, so that it reads as fluent, natural language.",
                "many errors that obscure the meaning",
                "no grammatical errors",
            ),
            entry(
                Metric::App,
                "Whether the question is suitable for the educational setting it comes from: it fits the level of the \
                 learners, is clearly worded, and is answerable from the material.",
                "unsuitable for the learners or unanswerable",
                "fully suitable for the intended learners",
            ),
            entry(
                Metric::Rel,
                "Whether the question is about the given context: it addresses the central content of the passage \
                 rather than drifting to unrelated material.",
                "unrelated to the context",
                "directly grounded in the key content of the context",
            ),
            entry(
                Metric::Nov,
                "Whether the question goes beyond restating the context: it asks for something not copied verbatim \
                 from the passage and brings a fresh angle to the material.",
                "a near-verbatim restatement of the context",
                "a distinctly original question",
            ),
            entry(
                Metric::Com,
                "How much cognitive effort answering the question demands: recall of a single fact is simple, while \
                 explaining, comparing or reasoning across several facts is complex.",
                "trivial recall",
                "demands substantial reasoning",
            ),
        ];
        MetricDefinitionSet::new(defs).expect("built-in definitions are complete")
    }

    /// Loads definitions from a JSON array of
    /// `{"metric", "name", "definition", "scale"}` objects.
    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let defs: Vec<MetricDefinition> = serde_json::from_str(text).map_err(|e| TemplateError::Definitions(e.to_string()))?;
        MetricDefinitionSet::new(defs)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = fs::read_to_string(path).map_err(|source| TemplateError::Io { path: path.to_path_buf(), source })?;
        MetricDefinitionSet::from_json(&text)
    }

    pub fn get(&self, metric: Metric) -> &MetricDefinition {
        &self.defs[Metric::ALL.iter().position(|m| *m == metric).expect("canonical")]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MetricDefinition> {
        self.defs.iter()
    }

    /// The block substituted for `{metric_definitions}`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for d in &self.defs {
            let _ = writeln!(s, "{} ({}): {} Scale: {}.", d.metric.label(), d.name, d.definition, d.scale);
        }
        s.truncate(s.trim_end().len());
        s
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

/// Numbered candidate listing used in judge prompts.
pub fn render_candidate_list(candidates: &[Critique]) -> String {
    let mut s = String::new();
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(s, "Strength {}: {}", i + 1, c.strength);
    }
    s.push('\n');
    for (i, c) in candidates.iter().enumerate() {
        let _ = writeln!(s, "Weakness {}: {}", i + 1, c.weakness);
    }
    s.truncate(s.trim_end_matches('\n').len());
    s
}

/// The full template family plus definitions and scale.
#[derive(Debug, Clone)]
pub struct PromptKit {
    templates: BTreeMap<TemplateId, PromptTemplate>,
    definitions: MetricDefinitionSet,
    scale: Scale,
}

impl PromptKit {
    pub fn new(templates: Vec<PromptTemplate>, definitions: MetricDefinitionSet, scale: Scale) -> Result<Self, TemplateError> {
        let templates: BTreeMap<TemplateId, PromptTemplate> = templates.into_iter().map(|t| (t.id, t)).collect();
        for id in TemplateId::ALL {
            if !templates.contains_key(&id) {
                return Err(TemplateError::Io {
                    path: PathBuf::from(id.file_name()),
                    source: io::Error::new(io::ErrorKind::NotFound, "template not supplied"),
                });
            }
        }
        Ok(PromptKit { templates, definitions, scale })
    }

    /// The shipped templates with default definitions on `scale`.
    pub fn builtin(scale: Scale) -> Self {
        let templates = TemplateId::ALL
            .into_iter()
            .map(|id| PromptTemplate::new(id, id.default_body()).expect("shipped templates are valid"))
            .collect();
        PromptKit::new(templates, MetricDefinitionSet::default_for(scale), scale).expect("complete")
    }

    /// Shipped templates overridden by any same-named files in `dir`.
    pub fn from_dir(dir: &Path, definitions: MetricDefinitionSet, scale: Scale) -> Result<Self, TemplateError> {
        let mut templates = Vec::new();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            let body = match fs::read_to_string(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => id.default_body().to_string(),
                Err(source) => return Err(TemplateError::Io { path, source }),
            };
            templates.push(PromptTemplate::new(id, body)?);
        }
        PromptKit::new(templates, definitions, scale)
    }

    pub fn with_definitions(mut self, definitions: MetricDefinitionSet) -> Self {
        self.definitions = definitions;
        self
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn definitions(&self) -> &MetricDefinitionSet {
        &self.definitions
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    /// `template id -> content hash`, plus the definitions hash under
    /// `metric_definitions`.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        let mut map: BTreeMap<String, String> = self.templates.values().map(|t| (t.id.to_string(), t.content_hash())).collect();
        map.insert("metric_definitions".into(), self.definitions.content_hash());
        map
    }

    pub fn render_baseline_prompt(&self, record: &QuestionRecord) -> Result<String, TemplateError> {
        let defs = self.definitions.render();
        let format = parse::score_format_instructions(self.scale);
        let bindings = HashMap::from([
            ("metric_definitions", defs.as_str()),
            ("context", record.context.as_str()),
            ("question", record.question.as_str()),
            ("output_format", format.as_str()),
        ]);
        self.template(TemplateId::Baseline).render(&bindings)
    }

    pub fn render_generation_prompt(&self, record: &QuestionRecord, feedback: Option<&Critique>) -> Result<String, TemplateError> {
        let feedback_section = match feedback {
            Some(fb) => self
                .template(TemplateId::GenerateFeedback)
                .render(&HashMap::from([("strength", fb.strength.as_str()), ("weakness", fb.weakness.as_str())]))?,
            None => String::new(),
        };
        let defs = self.definitions.render();
        let format = parse::candidate_format_instructions();
        let bindings = HashMap::from([
            ("metric_definitions", defs.as_str()),
            ("context", record.context.as_str()),
            ("question", record.question.as_str()),
            ("feedback_section", feedback_section.as_str()),
            ("output_format", format.as_str()),
        ]);
        self.template(TemplateId::Generate).render(&bindings)
    }

    pub fn render_judge_prompt(&self, record: &QuestionRecord, candidates: &[Critique]) -> Result<String, TemplateError> {
        if candidates.is_empty() {
            return Err(TemplateError::NoCandidates);
        }
        let defs = self.definitions.render();
        let listing = render_candidate_list(candidates);
        let count = candidates.len().to_string();
        let format = parse::judge_format_instructions(self.scale, candidates.len());
        let bindings = HashMap::from([
            ("metric_definitions", defs.as_str()),
            ("context", record.context.as_str()),
            ("question", record.question.as_str()),
            ("candidates", listing.as_str()),
            ("candidate_count", count.as_str()),
            ("output_format", format.as_str()),
        ]);
        self.template(TemplateId::Judge).render(&bindings)
    }
}
