//! Split conformal calibration and prediction-set construction.
//!
//! Calibration takes the `k`-th smallest calibration score with
//! `k = ceil((n + 1)(1 - alpha))`. When `k > n` no finite threshold can honor
//! the guarantee and the threshold becomes [`Threshold::IncludeAll`].
//!
//! Record splits are reproducible across platforms: records are sorted by
//! `record_id`, shuffled with a Fisher-Yates pass driven by a SplitMix64
//! generator seeded with [`SplitConfig::seed`], and the first
//! `floor(calibration_fraction * N)` records form the calibration half.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::domain::{check_alpha, EvalRecord, OptionLabel, PredictiveDistribution, SplitConfig};
use crate::error::{Error, Result};
use crate::scoring::{score, ScoreFunction};

/// Nonconformity scores of the calibration records at their true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationScores {
    scores: Vec<f64>,
    score_fn: ScoreFunction,
}

impl CalibrationScores {
    pub fn new(scores: Vec<f64>, score_fn: ScoreFunction) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::config("calibration needs at least one score"));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::config(format!("non-finite calibration score {s}")));
        }
        Ok(Self { scores, score_fn })
    }

    /// Scores each record's normalized distribution at its true label.
    pub fn from_records(records: &[EvalRecord], score_fn: ScoreFunction) -> Result<Self> {
        let scores = records
            .iter()
            .map(|r| score(&r.distribution()?, r.true_label, score_fn))
            .collect::<Result<Vec<_>>>()?;
        Self::new(scores, score_fn)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_fn(&self) -> ScoreFunction {
        self.score_fn
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Calibrated cut-off on the nonconformity score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    /// Too few calibration points for the requested level: every label is kept.
    IncludeAll,
}

impl Threshold {
    pub const INCLUDE_ALL: &'static str = "INCLUDE_ALL";

    pub fn admits(self, score: f64) -> bool {
        match self {
            Threshold::Value(q) => score <= q,
            Threshold::IncludeAll => true,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Value(q) => Some(q),
            Threshold::IncludeAll => None,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Value(q) => write!(f, "{q}"),
            Threshold::IncludeAll => f.write_str(Self::INCLUDE_ALL),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::Value(q) => s.serialize_f64(*q),
            Threshold::IncludeAll => s.serialize_str(Self::INCLUDE_ALL),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => Ok(Threshold::Value(q)),
            Raw::Tag(t) if t == Self::INCLUDE_ALL => Ok(Threshold::IncludeAll),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown threshold {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalThreshold {
    pub qhat: Threshold,
    pub alpha: f64,
    pub n: usize,
    pub score_fn: ScoreFunction,
}

/// `ceil((n + 1)(1 - alpha))`, the 1-indexed order statistic used as the threshold.
///
/// Products within `1e-9` (relative) of an integer are snapped to it, so a
/// decimal alpha such as `0.1` does not pick up an extra rank from binary
/// rounding of `1 - alpha`.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let target = (n as f64 + 1.0) * (1.0 - alpha);
    let nearest = target.round();
    if (target - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        target.ceil() as usize
    }
}

pub fn calibrate(cal: &CalibrationScores, alpha: f64) -> Result<ConformalThreshold> {
    check_alpha(alpha)?;
    let n = cal.len();
    let k = quantile_rank(n, alpha);
    let qhat = if k > n {
        Threshold::IncludeAll
    } else {
        // k >= 1 because alpha < 1 makes (n + 1)(1 - alpha) positive.
        let k = k.max(1);
        let mut sorted = cal.scores.clone();
        let (_, kth, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        Threshold::Value(*kth)
    };
    Ok(ConformalThreshold {
        qhat,
        alpha,
        n,
        score_fn: cal.score_fn,
    })
}

/// A set of candidate answers, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    members: Vec<OptionLabel>,
}

impl PredictionSet {
    pub fn new(members: impl IntoIterator<Item = OptionLabel>) -> Self {
        let members: BTreeSet<_> = members.into_iter().collect();
        Self {
            members: members.into_iter().collect(),
        }
    }

    pub fn members(&self) -> &[OptionLabel] {
        &self.members
    }

    pub fn contains(&self, label: OptionLabel) -> bool {
        self.members.binary_search(&label).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_subset(&self, other: &PredictionSet) -> bool {
        self.members.iter().all(|m| other.contains(*m))
    }
}

impl fmt::Display for PredictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{m}")?;
        }
        f.write_str("}")
    }
}

/// Every label whose score does not exceed the threshold. Empty sets are
/// returned as-is.
pub fn predict_set(dist: &PredictiveDistribution, th: &ConformalThreshold) -> PredictionSet {
    let members = dist.labels().iter().copied().filter(|&y| match th.qhat {
        Threshold::IncludeAll => true,
        Threshold::Value(_) => {
            let s = score(dist, y, th.score_fn).expect("label taken from the distribution");
            th.qhat.admits(s)
        }
    });
    PredictionSet {
        members: members.collect(),
    }
}

/// Splits one (dataset, model) corpus into calibration and test halves.
pub fn partition(
    records: &[EvalRecord],
    cfg: &SplitConfig,
) -> Result<(Vec<EvalRecord>, Vec<EvalRecord>)> {
    cfg.validate()?;
    if let Some(first) = records.first() {
        if let Some(other) = records
            .iter()
            .find(|r| r.dataset_id != first.dataset_id || r.model_id != first.model_id)
        {
            return Err(Error::config(format!(
                "a split must cover one (dataset, model) pair; found ({}, {}) and ({}, {})",
                first.dataset_id, first.model_id, other.dataset_id, other.model_id
            )));
        }
    }
    let n_total = records.len();
    let n_cal = (cfg.calibration_fraction * n_total as f64).floor() as usize;
    if n_cal == 0 || n_cal >= n_total {
        return Err(Error::config(format!(
            "split of {n_total} records at fraction {} leaves {n_cal} calibration and {} test records; both sides need at least one",
            cfg.calibration_fraction,
            n_total.saturating_sub(n_cal)
        )));
    }
    let mut shuffled = records.to_vec();
    shuffled.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    let mut rng = SplitMix64::seed_from_u64(cfg.seed);
    shuffled.shuffle(&mut rng);
    let test = shuffled.split_off(n_cal);
    Ok((shuffled, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub threshold: ConformalThreshold,
    pub calibration: Vec<EvalRecord>,
    pub test_sets: Vec<(EvalRecord, PredictionSet)>,
}

/// Calibrates on `calibration` and builds a prediction set for every test record.
pub fn conformalize(
    calibration: &[EvalRecord],
    test: &[EvalRecord],
    alpha: f64,
    score_fn: ScoreFunction,
) -> Result<(ConformalThreshold, Vec<(EvalRecord, PredictionSet)>)> {
    let cal = CalibrationScores::from_records(calibration, score_fn)?;
    let threshold = calibrate(&cal, alpha)?;
    let test_sets = test
        .iter()
        .map(|r| Ok((r.clone(), predict_set(&r.distribution()?, &threshold))))
        .collect::<Result<Vec<_>>>()?;
    Ok((threshold, test_sets))
}

pub fn run_split(
    records: &[EvalRecord],
    cfg: &SplitConfig,
    score_fn: ScoreFunction,
) -> Result<SplitOutcome> {
    let (calibration, test) = partition(records, cfg)?;
    let (threshold, test_sets) = conformalize(&calibration, &test, cfg.alpha, score_fn)?;
    Ok(SplitOutcome {
        threshold,
        calibration,
        test_sets,
    })
}
