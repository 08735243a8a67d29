//! The five question-quality metrics and the integer score vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One of the five rubric dimensions a question is scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Gram,
    App,
    Rel,
    Nov,
    Com,
}

impl Metric {
    /// Canonical order used everywhere scores are listed: tables, prompts, files.
    pub const ALL: [Metric; 5] = [Metric::Gram, Metric::App, Metric::Rel, Metric::Nov, Metric::Com];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Gram => "Gram",
            Metric::App => "App",
            Metric::Rel => "Rel",
            Metric::Nov => "Nov",
            Metric::Com => "Com",
        }
    }

    pub fn full_name(self) -> &'static str {
        match self {
            Metric::Gram => "Grammaticality",
            Metric::App => "Appropriateness",
            Metric::Rel => "Relevance",
            Metric::Nov => "Novelty",
            Metric::Com => "Complexity",
        }
    }

    /// Lower-case column name used in ratings and summary files.
    pub fn column(self) -> &'static str {
        match self {
            Metric::Gram => "gram",
            Metric::App => "app",
            Metric::Rel => "rel",
            Metric::Nov => "nov",
            Metric::Com => "com",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown metric label {0:?}")]
pub struct UnknownMetric(pub String);

impl FromStr for Metric {
    type Err = UnknownMetric;

    /// Accepts the short label or the full name, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        Metric::ALL
            .into_iter()
            .find(|m| t.eq_ignore_ascii_case(m.label()) || t.eq_ignore_ascii_case(m.full_name()))
            .ok_or_else(|| UnknownMetric(t.to_string()))
    }
}

/// Inclusive integer Likert range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scale {
    pub min: i64,
    pub max: i64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale { min: 1, max: 5 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScaleError {
    #[error("scale minimum {min} must be below maximum {max}")]
    Empty { min: i64, max: i64 },
    #[error("{metric} score {value} is outside the {min}-{max} scale")]
    OutOfRange { metric: Metric, value: i64, min: i64, max: i64 },
}

impl Scale {
    pub fn new(min: i64, max: i64) -> Result<Self, ScaleError> {
        if min >= max {
            return Err(ScaleError::Empty { min, max });
        }
        Ok(Scale { min, max })
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.min..=self.max).contains(&v)
    }

    pub fn width(&self) -> usize {
        (self.max - self.min + 1) as usize
    }
}

/// Integer scores for one question on all five metrics.
///
/// Equality is exact, field-wise integer equality; the STRIVE loop uses it as
/// its convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricScores {
    pub gram: i64,
    pub app: i64,
    pub rel: i64,
    pub nov: i64,
    pub com: i64,
}

impl MetricScores {
    pub const fn new(gram: i64, app: i64, rel: i64, nov: i64, com: i64) -> Self {
        MetricScores { gram, app, rel, nov, com }
    }

    pub fn from_array(v: [i64; 5]) -> Self {
        MetricScores::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn to_array(self) -> [i64; 5] {
        [self.gram, self.app, self.rel, self.nov, self.com]
    }

    pub fn get(&self, metric: Metric) -> i64 {
        match metric {
            Metric::Gram => self.gram,
            Metric::App => self.app,
            Metric::Rel => self.rel,
            Metric::Nov => self.nov,
            Metric::Com => self.com,
        }
    }

    pub fn set(&mut self, metric: Metric, value: i64) {
        match metric {
            Metric::Gram => self.gram = value,
            Metric::App => self.app = value,
            Metric::Rel => self.rel = value,
            Metric::Nov => self.nov = value,
            Metric::Com => self.com = value,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Metric, i64)> + '_ {
        Metric::ALL.into_iter().map(move |m| (m, self.get(m)))
    }

    /// Checks every field against `scale`, reporting the first offender in
    /// canonical metric order.
    pub fn validate(&self, scale: Scale) -> Result<(), ScaleError> {
        for (metric, value) in self.iter() {
            if !scale.contains(value) {
                return Err(ScaleError::OutOfRange { metric, value, min: scale.min, max: scale.max });
            }
        }
        Ok(())
    }
}

impl fmt::Display for MetricScores {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{},{})", self.gram, self.app, self.rel, self.nov, self.com)
    }
}
