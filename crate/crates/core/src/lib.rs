//! Split conformal prediction for multiple-choice predictive distributions.
//!
//! The crate turns per-option log-probabilities emitted by a model into
//! calibrated prediction sets and aggregates the usual evaluation metrics
//! (accuracy, set size, coverage, entropy) over a benchmark sweep.
//!
//! Module map:
//! - [`domain`]: option labels, distributions, records and softmax normalization.
//! - [`scoring`]: LAC, APS and margin nonconformity scores.
//! - [`conformal`]: quantile calibration, prediction sets and the seeded split.
//! - [`metrics`]: set size, accuracy, coverage and entropy.
//! - [`ingest`]: JSONL record files, dataset profiles, option padding and validation.
//! - [`synth`]: seeded synthetic corpora with controllable miscalibration.
//! - [`bench`]: sweep orchestration, aggregation and report emission.

pub mod bench;
pub mod conformal;
pub mod domain;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod scoring;
pub mod synth;

pub use conformal::{
    calibrate, partition, predict_set, run_split, CalibrationScores, ConformalThreshold,
    PredictionSet, SplitOutcome, Threshold,
};
pub use domain::{argmax, normalize, EvalRecord, OptionLabel, PredictiveDistribution, SplitConfig};
pub use error::{Error, Result};
pub use metrics::{EntropyScope, EvalMetrics};
pub use scoring::{score, ScoreFunction};
