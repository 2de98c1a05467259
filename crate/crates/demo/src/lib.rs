//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export takes plain numbers or strings and returns a JSON string, so
//! the page needs no generated TypeScript types.

use std::collections::BTreeMap;

use confbench_core::conformal::{calibrate, conformalize, predict_set, CalibrationScores, ConformalThreshold, Threshold};
use confbench_core::metrics::{accuracy, coverage, mean_entropy, set_size};
use confbench_core::scoring::score;
use confbench_core::synth::{generate, SynthConfig};
use confbench_core::{normalize, partition, OptionLabel, ScoreFunction, SplitConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Simulation {
    pub n_cal: usize,
    pub n_test: usize,
    pub qhat: Threshold,
    pub accuracy: f64,
    pub coverage: f64,
    pub set_size: f64,
    pub mean_entropy: f64,
    /// Number of test sets of each size `0..=k`.
    pub set_size_histogram: Vec<usize>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub qhat: Threshold,
    pub coverage: f64,
    pub set_size: f64,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct OptionView {
    pub label: OptionLabel,
    pub prob: f64,
    pub score: f64,
    pub in_set: bool,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Inspection {
    pub options: Vec<OptionView>,
    pub set: String,
}

fn corpus(n: usize, k: usize, seed: u64, temperature: f64) -> Result<(Vec<confbench_core::EvalRecord>, Vec<confbench_core::EvalRecord>), String> {
    let records = generate(&SynthConfig {
        n,
        k,
        seed,
        temperature,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    partition(&records, &SplitConfig::with_seed(seed)).map_err(|e| e.to_string())
}

fn score_fn(name: &str) -> Result<ScoreFunction, String> {
    name.parse().map_err(|e: confbench_core::Error| e.to_string())
}

/// One split of a synthetic corpus, calibrated at `alpha`.
pub fn simulate_report(n: usize, k: usize, seed: u64, temperature: f64, alpha: f64, func: &str) -> Result<Simulation, String> {
    let func = score_fn(func)?;
    let (cal, test) = corpus(n, k, seed, temperature)?;
    let (th, sets) = conformalize(&cal, &test, alpha, func).map_err(|e| e.to_string())?;
    let mut histogram = vec![0; k + 1];
    for (_, s) in &sets {
        histogram[s.len()] += 1;
    }
    let (entropy, _) = mean_entropy(&test).map_err(|e| e.to_string())?;
    Ok(Simulation {
        n_cal: cal.len(),
        n_test: test.len(),
        qhat: th.qhat,
        accuracy: accuracy(test.iter()).map_err(|e| e.to_string())?,
        coverage: coverage(&sets).map_err(|e| e.to_string())?,
        set_size: set_size(sets.iter().map(|(_, s)| s)).map_err(|e| e.to_string())?,
        mean_entropy: entropy,
        set_size_histogram: histogram,
    })
}

/// Coverage and set size for `steps` alphas evenly spaced over [0.01, 0.5],
/// all on the same split.
pub fn alpha_sweep_points(n: usize, k: usize, seed: u64, temperature: f64, func: &str, steps: usize) -> Result<Vec<SweepPoint>, String> {
    let func = score_fn(func)?;
    let (cal, test) = corpus(n, k, seed, temperature)?;
    let scores = CalibrationScores::from_records(&cal, func).map_err(|e| e.to_string())?;
    let dists = test
        .iter()
        .map(|r| r.distribution().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let steps = steps.max(2);
    (0..steps)
        .map(|i| {
            let alpha = 0.01 + 0.49 * i as f64 / (steps - 1) as f64;
            let th = calibrate(&scores, alpha).map_err(|e| e.to_string())?;
            let (mut covered, mut total) = (0usize, 0usize);
            for (r, d) in test.iter().zip(&dists) {
                let set = predict_set(d, &th);
                covered += set.contains(r.true_label) as usize;
                total += set.len();
            }
            Ok(SweepPoint {
                alpha,
                qhat: th.qhat,
                coverage: covered as f64 / test.len() as f64,
                set_size: total as f64 / test.len() as f64,
            })
        })
        .collect()
}

/// Scores every option of one record and shows which enter the set at `qhat`.
/// `logprobs` is a JSON object such as `{"A": -0.2, "B": -1.9}`.
pub fn inspect_record(logprobs: &str, qhat: f64, func: &str) -> Result<Inspection, String> {
    let func = score_fn(func)?;
    let raw: BTreeMap<OptionLabel, f64> = serde_json::from_str(logprobs).map_err(|e| format!("logprobs: {e}"))?;
    let dist = normalize(&raw).map_err(|e| e.to_string())?;
    if !qhat.is_finite() {
        return Err(format!("qhat must be finite, got {qhat}"));
    }
    let th = ConformalThreshold {
        qhat: Threshold::Value(qhat),
        alpha: f64::NAN,
        n: 0,
        score_fn: func,
    };
    let set = predict_set(&dist, &th);
    let options = dist
        .iter()
        .map(|(label, prob)| OptionView {
            label,
            prob,
            score: score(&dist, label, func).expect("label from the distribution"),
            in_set: set.contains(label),
        })
        .collect();
    Ok(Inspection {
        options,
        set: set.to_string(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn simulate(n: usize, k: usize, seed: u32, temperature: f64, alpha: f64, score_fn: &str) -> Result<String, JsError> {
    to_js(simulate_report(n, k, seed as u64, temperature, alpha, score_fn))
}

#[wasm_bindgen]
pub fn alpha_sweep(n: usize, k: usize, seed: u32, temperature: f64, score_fn: &str, steps: usize) -> Result<String, JsError> {
    to_js(alpha_sweep_points(n, k, seed as u64, temperature, score_fn, steps))
}

#[wasm_bindgen]
pub fn inspect(logprobs: &str, qhat: f64, score_fn: &str) -> Result<String, JsError> {
    to_js(inspect_record(logprobs, qhat, score_fn))
}
