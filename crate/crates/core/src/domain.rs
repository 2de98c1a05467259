//! Shared domain types: option labels, predictive distributions and the
//! per-question evaluation record.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a distribution's probabilities.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Smallest and largest number of options a question may carry.
pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 10;

/// A multiple-choice answer letter, `A` through `J`.
///
/// Ordering is alphabetical. Parsing accepts lowercase input and upper-cases it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OptionLabel(u8);

impl OptionLabel {
    pub const A: OptionLabel = OptionLabel(b'A');
    pub const J: OptionLabel = OptionLabel(b'J');

    pub fn new(letter: char) -> Result<Self> {
        let upper = letter.to_ascii_uppercase();
        if ('A'..='J').contains(&upper) {
            Ok(OptionLabel(upper as u8))
        } else {
            Err(Error::malformed(
                None,
                format!("option label {letter:?} is not a letter in A..J"),
            ))
        }
    }

    /// Label at zero-based position `index` (0 → A).
    pub fn from_index(index: usize) -> Option<Self> {
        (index < MAX_OPTIONS).then(|| OptionLabel(b'A' + index as u8))
    }

    pub fn index(self) -> usize {
        (self.0 - b'A') as usize
    }

    pub fn letter(self) -> char {
        self.0 as char
    }

    /// All labels from `A` up to `last`, inclusive.
    pub fn range_through(last: OptionLabel) -> impl Iterator<Item = OptionLabel> {
        (b'A'..=last.0).map(OptionLabel)
    }

    pub fn all() -> impl Iterator<Item = OptionLabel> {
        Self::range_through(Self::J)
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for OptionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => OptionLabel::new(c),
            _ => Err(Error::malformed(
                None,
                format!("option label {s:?} must be a single letter in A..J"),
            )),
        }
    }
}

impl Serialize for OptionLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptionLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A probability vector over an ordered, duplicate-free set of option labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    labels: Vec<OptionLabel>,
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    /// Builds a distribution, checking every invariant: 2..=10 labels,
    /// strictly increasing labels, non-negative probabilities summing to one.
    pub fn new(labels: Vec<OptionLabel>, probs: Vec<f64>) -> Result<Self> {
        if labels.len() != probs.len() {
            return Err(Error::malformed(
                None,
                format!("{} labels but {} probabilities", labels.len(), probs.len()),
            ));
        }
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&labels.len()) {
            return Err(Error::malformed(
                None,
                format!(
                    "a distribution needs {MIN_OPTIONS}..={MAX_OPTIONS} options, got {}",
                    labels.len()
                ),
            ));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::malformed(None, "labels must be unique and sorted"));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::malformed(None, format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::malformed(
                None,
                format!("probabilities sum to {total}, expected 1"),
            ));
        }
        Ok(Self { labels, probs })
    }

    /// Convenience constructor from `(label, probability)` pairs in any order.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (OptionLabel, f64)>) -> Result<Self> {
        let mut pairs: Vec<_> = pairs.into_iter().collect();
        pairs.sort_by_key(|(label, _)| *label);
        let (labels, probs) = pairs.into_iter().unzip();
        Self::new(labels, probs)
    }

    /// Uniform distribution over `A..` with `k` options.
    pub fn uniform(k: usize) -> Result<Self> {
        let labels = (0..k).filter_map(OptionLabel::from_index).collect::<Vec<_>>();
        if labels.len() != k {
            return Err(Error::malformed(None, format!("cannot build {k} labels")));
        }
        Self::new(labels, vec![1.0 / k as f64; k])
    }

    pub fn labels(&self) -> &[OptionLabel] {
        &self.labels
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (OptionLabel, f64)> + '_ {
        self.labels.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn position(&self, label: OptionLabel) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn prob(&self, label: OptionLabel) -> Result<f64> {
        self.position(label)
            .map(|i| self.probs[i])
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn contains(&self, label: OptionLabel) -> bool {
        self.position(label).is_some()
    }
}

/// Softmax of raw per-option scores (log-probabilities or logits).
///
/// The maximum is subtracted before exponentiation, so arbitrarily large
/// finite inputs never overflow.
pub fn normalize(logprobs: &BTreeMap<OptionLabel, f64>) -> Result<PredictiveDistribution> {
    if logprobs.len() < MIN_OPTIONS {
        return Err(Error::malformed(
            None,
            format!("need at least {MIN_OPTIONS} options, got {}", logprobs.len()),
        ));
    }
    if let Some((label, value)) = logprobs.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::malformed(
            None,
            format!("non-finite score {value} for option {label}"),
        ));
    }
    let max = logprobs.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logprobs.values().map(|v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.into_iter().map(|w| w / total).collect();
    PredictiveDistribution::new(logprobs.keys().copied().collect(), probs)
}

/// Label with the highest probability; ties go to the alphabetically first label.
pub fn argmax(dist: &PredictiveDistribution) -> OptionLabel {
    let mut best = 0;
    for (i, p) in dist.probs.iter().enumerate().skip(1) {
        if *p > dist.probs[best] {
            best = i;
        }
    }
    dist.labels[best]
}

/// One multiple-choice question answered by one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub record_id: String,
    pub dataset_id: String,
    pub model_id: String,
    /// Raw per-option scores in natural-log units. Any finite reals are accepted.
    pub logprobs: BTreeMap<OptionLabel, f64>,
    pub true_label: OptionLabel,
    /// The answer the model actually decoded.
    pub predicted_label: OptionLabel,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub multi_image: bool,
}

impl EvalRecord {
    /// Checks the record-level invariants: at least two options, finite
    /// scores, and both labels present among the options.
    pub fn validate(&self) -> Result<()> {
        if self.logprobs.len() < MIN_OPTIONS {
            return Err(Error::malformed(
                None,
                format!("record {:?} has fewer than {MIN_OPTIONS} options", self.record_id),
            ));
        }
        if self.logprobs.values().any(|v| !v.is_finite()) {
            return Err(Error::malformed(
                None,
                format!("record {:?} has a non-finite log-probability", self.record_id),
            ));
        }
        for (field, label) in [
            ("true_label", self.true_label),
            ("predicted_label", self.predicted_label),
        ] {
            if !self.logprobs.contains_key(&label) {
                return Err(Error::malformed(
                    None,
                    format!(
                        "record {:?}: {field} {label} is not one of its options",
                        self.record_id
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn distribution(&self) -> Result<PredictiveDistribution> {
        normalize(&self.logprobs)
    }

    /// The answer re-derived from the normalized distribution, as opposed to
    /// the decoded `predicted_label`.
    pub fn derived_label(&self) -> Result<OptionLabel> {
        self.distribution().map(|d| argmax(&d))
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_label == self.true_label
    }
}

/// Miscoverage level, calibration share and shuffle seed for one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub alpha: f64,
    pub calibration_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub const DEFAULT_ALPHA: f64 = 0.1;
    pub const DEFAULT_CALIBRATION_FRACTION: f64 = 0.5;

    pub fn new(alpha: f64, calibration_fraction: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            alpha,
            calibration_fraction,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::config(format!(
                "calibration_fraction must lie in (0, 1), got {}",
                self.calibration_fraction
            )));
        }
        Ok(())
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            calibration_fraction: Self::DEFAULT_CALIBRATION_FRACTION,
            seed: 0,
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "alpha must lie in the open interval (0, 1), got {alpha}"
        )))
    }
}
