//! Seeded synthetic corpora.
//!
//! Each question draws a "true" distribution `p ~ Dirichlet(c, ..., c)` over
//! `K` options and a true label `y ~ p`. The emitted log-probabilities are
//! `ln(p) / T`: at `T = 1` the model is perfectly calibrated, larger `T`
//! flattens its beliefs while the labels still follow `p`. The decoded answer
//! is the argmax of the emitted scores.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::domain::{argmax, normalize, EvalRecord, OptionLabel, MAX_OPTIONS, MIN_OPTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Temperature applied to the emitted scores; 1.0 means calibrated.
    pub temperature: f64,
    /// Symmetric Dirichlet concentration of the true distributions.
    pub concentration: f64,
    pub dataset_id: String,
    pub model_id: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 4,
            seed: 0,
            temperature: 1.0,
            concentration: 1.0,
            dataset_id: "synthetic".into(),
            model_id: "synthetic-model".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("n must be at least 2, got {}", self.n)));
        }
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&self.k) {
            return Err(Error::config(format!(
                "k must lie in {MIN_OPTIONS}..={MAX_OPTIONS}, got {}",
                self.k
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::config(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        if !(self.concentration.is_finite() && self.concentration > 0.0) {
            return Err(Error::config(format!(
                "concentration must be positive and finite, got {}",
                self.concentration
            )));
        }
        Ok(())
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<EvalRecord>> {
    cfg.validate()?;
    let mut rng = SplitMix64::seed_from_u64(cfg.seed);
    let gamma = Gamma::new(cfg.concentration, 1.0)
        .map_err(|e| Error::config(format!("concentration: {e}")))?;
    let labels: Vec<_> = (0..cfg.k).filter_map(OptionLabel::from_index).collect();
    let width = (cfg.n - 1).to_string().len().max(6);

    let mut records = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut weights: Vec<f64> = (0..cfg.k)
            .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut true_idx = cfg.k - 1;
        for (j, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                true_idx = j;
                break;
            }
        }

        let logprobs: BTreeMap<_, _> = labels
            .iter()
            .zip(&weights)
            .map(|(l, w)| (*l, w.ln() / cfg.temperature))
            .collect();
        let predicted = argmax(&normalize(&logprobs)?);
        records.push(EvalRecord {
            record_id: format!("syn-{i:0width$}"),
            dataset_id: cfg.dataset_id.clone(),
            model_id: cfg.model_id.clone(),
            logprobs,
            true_label: labels[true_idx],
            predicted_label: predicted,
            multi_image: false,
        });
    }
    Ok(records)
}
