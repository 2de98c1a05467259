//! Nonconformity scores for a candidate label under a predictive distribution.
//!
//! Lower scores mean the label conforms better to the model's belief.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{OptionLabel, PredictiveDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreFunction {
    /// Least ambiguous classifier: `1 - p(y)`.
    #[serde(rename = "LAC")]
    Lac,
    /// Adaptive prediction sets: mass of every label at least as likely as `y`.
    #[serde(rename = "APS")]
    Aps,
    /// Top-1 minus top-2 probability. Does not depend on `y`, so every label
    /// of a question gets the same score.
    #[serde(rename = "MARGIN_PAPER")]
    MarginPaper,
    /// Best competing probability minus `p(y)`, in `[-1, 1]`.
    #[serde(rename = "MARGIN_LABEL")]
    MarginLabel,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 4] = [
        ScoreFunction::Lac,
        ScoreFunction::Aps,
        ScoreFunction::MarginPaper,
        ScoreFunction::MarginLabel,
    ];

    /// The three report columns: LAC, APS and the label-dependent margin ("MS").
    pub const REPORT_DEFAULT: [ScoreFunction; 3] =
        [ScoreFunction::Lac, ScoreFunction::Aps, ScoreFunction::MarginLabel];

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunction::Lac => "LAC",
            ScoreFunction::Aps => "APS",
            ScoreFunction::MarginPaper => "MARGIN_PAPER",
            ScoreFunction::MarginLabel => "MARGIN_LABEL",
        }
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "LAC" => Ok(ScoreFunction::Lac),
            "APS" => Ok(ScoreFunction::Aps),
            "MARGIN_PAPER" => Ok(ScoreFunction::MarginPaper),
            "MARGIN_LABEL" | "MARGIN" | "MS" => Ok(ScoreFunction::MarginLabel),
            _ => Err(Error::config(format!(
                "unknown score function {s:?} (expected LAC, APS, MARGIN_PAPER or MARGIN_LABEL)"
            ))),
        }
    }
}

pub fn score_lac(dist: &PredictiveDistribution, y: OptionLabel) -> Result<f64> {
    Ok(1.0 - dist.prob(y)?)
}

/// Sums every probability `>= p(y)`, so labels tied with `y` are all included.
pub fn score_aps(dist: &PredictiveDistribution, y: OptionLabel) -> Result<f64> {
    let py = dist.prob(y)?;
    Ok(dist.probs().iter().filter(|p| **p >= py).sum())
}

/// Margin score for either margin variant.
pub fn score_margin(
    dist: &PredictiveDistribution,
    y: OptionLabel,
    kind: ScoreFunction,
) -> Result<f64> {
    if dist.len() < 2 {
        return Err(Error::malformed(None, "margin needs at least two options"));
    }
    let idx = dist.position(y).ok_or_else(|| Error::UnknownLabel(y.to_string()))?;
    let probs = dist.probs();
    match kind {
        ScoreFunction::MarginPaper => {
            let (first, second) = top_two(probs);
            Ok(first - second)
        }
        ScoreFunction::MarginLabel => {
            let best_other = probs
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != idx)
                .map(|(_, p)| *p)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(best_other - probs[idx])
        }
        other => Err(Error::config(format!("{other} is not a margin score"))),
    }
}

fn top_two(probs: &[f64]) -> (f64, f64) {
    let mut first = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &p in probs {
        if p > first {
            second = first;
            first = p;
        } else if p > second {
            second = p;
        }
    }
    (first, second)
}

pub fn score(dist: &PredictiveDistribution, y: OptionLabel, func: ScoreFunction) -> Result<f64> {
    match func {
        ScoreFunction::Lac => score_lac(dist, y),
        ScoreFunction::Aps => score_aps(dist, y),
        ScoreFunction::MarginPaper | ScoreFunction::MarginLabel => score_margin(dist, y, func),
    }
}

/// Scores for every label of `dist`, in label order.
pub fn score_all(dist: &PredictiveDistribution, func: ScoreFunction) -> Vec<f64> {
    dist.labels()
        .iter()
        .map(|&y| score(dist, y, func).expect("label taken from the distribution"))
        .collect()
}
