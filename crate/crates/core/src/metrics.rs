//! Test-split aggregates: set size, accuracy, coverage and entropy.

use serde::{Deserialize, Serialize};

use crate::conformal::PredictionSet;
use crate::domain::{EvalRecord, PredictiveDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub set_size: f64,
    pub accuracy: f64,
    pub coverage: f64,
    /// Mean per-record entropy normalized by `log2 K`, in `[0, 1]`.
    pub mean_entropy: f64,
    /// Mean per-record entropy in bits.
    pub mean_entropy_bits: f64,
    pub n_test: usize,
    pub empty_set_count: usize,
}

/// Which records the mean entropy is averaged over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyScope {
    #[default]
    AllRecords,
    TestSplit,
}

fn non_empty(n: usize, what: &str) -> Result<f64> {
    if n == 0 {
        Err(Error::config(format!("{what} needs at least one test record")))
    } else {
        Ok(n as f64)
    }
}

/// Mean prediction-set cardinality.
pub fn set_size<'a>(sets: impl IntoIterator<Item = &'a PredictionSet>) -> Result<f64> {
    let (n, total) = sets
        .into_iter()
        .fold((0usize, 0usize), |(n, t), s| (n + 1, t + s.len()));
    Ok(total as f64 / non_empty(n, "set size")?)
}

/// Fraction of records whose decoded answer equals the true label.
pub fn accuracy<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<f64> {
    let (n, hits) = records
        .into_iter()
        .fold((0usize, 0usize), |(n, h), r| (n + 1, h + r.is_correct() as usize));
    Ok(hits as f64 / non_empty(n, "accuracy")?)
}

/// Fraction of test records whose true label lies in their prediction set.
pub fn coverage(test_sets: &[(EvalRecord, PredictionSet)]) -> Result<f64> {
    let hits = test_sets
        .iter()
        .filter(|(r, s)| s.contains(r.true_label))
        .count();
    Ok(hits as f64 / non_empty(test_sets.len(), "coverage")?)
}

/// Shannon entropy in bits with `0 log 0 = 0`; divided by `log2 K` when `normalized`.
pub fn entropy(dist: &PredictiveDistribution, normalized: bool) -> f64 {
    let bits: f64 = dist
        .probs()
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    if normalized {
        bits / (dist.len() as f64).log2()
    } else {
        bits
    }
}

/// Mean entropy over `records` as `(normalized, bits)`.
pub fn mean_entropy<'a>(records: impl IntoIterator<Item = &'a EvalRecord>) -> Result<(f64, f64)> {
    let mut n = 0usize;
    let (mut norm, mut bits) = (0.0, 0.0);
    for r in records {
        let d = r.distribution()?;
        norm += entropy(&d, true);
        bits += entropy(&d, false);
        n += 1;
    }
    let n = non_empty(n, "entropy")?;
    Ok((norm / n, bits / n))
}

/// All metrics for one test split. `entropy_records` is the population the
/// entropy is averaged over (see [`EntropyScope`]).
pub fn evaluate(
    test_sets: &[(EvalRecord, PredictionSet)],
    entropy_records: &[EvalRecord],
) -> Result<EvalMetrics> {
    let (mean_entropy, mean_entropy_bits) = mean_entropy(entropy_records)?;
    Ok(EvalMetrics {
        set_size: set_size(test_sets.iter().map(|(_, s)| s))?,
        accuracy: accuracy(test_sets.iter().map(|(r, _)| r))?,
        coverage: coverage(test_sets)?,
        mean_entropy,
        mean_entropy_bits,
        n_test: test_sets.len(),
        empty_set_count: test_sets.iter().filter(|(_, s)| s.is_empty()).count(),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::domain::OptionLabel;

    fn l(c: char) -> OptionLabel {
        OptionLabel::new(c).unwrap()
    }

    fn set(s: &str) -> PredictionSet {
        PredictionSet::new(s.chars().map(l))
    }

    fn rec(truth: char, pred: char) -> EvalRecord {
        EvalRecord {
            record_id: format!("{truth}{pred}"),
            dataset_id: "d".into(),
            model_id: "m".into(),
            logprobs: "ABCDEF".chars().map(|c| (l(c), 0.0)).collect::<BTreeMap<_, _>>(),
            true_label: l(truth),
            predicted_label: l(pred),
            multi_image: false,
        }
    }

    #[test]
    fn set_size_examples() {
        assert_eq!(set_size(&[set("A"), set("B"), set("AB")]).unwrap(), 4.0 / 3.0);
        assert_eq!(set_size(&[set("A"), set("C")]).unwrap(), 1.0);
        assert_eq!(set_size(&vec![set("ABCDEF"); 3]).unwrap(), 6.0);
        assert!(set_size(&[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[rec('A', 'A'), rec('B', 'B')]).unwrap(), 1.0);
        assert_eq!(accuracy(&[rec('A', 'B')]).unwrap(), 0.0);
        let recs = [rec('A', 'A'), rec('B', 'B'), rec('C', 'C'), rec('D', 'A')];
        assert_eq!(accuracy(&recs).unwrap(), 0.75);
        assert!(accuracy(&[]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let full = vec![(rec('A', 'B'), set("ABCDEF")), (rec('F', 'A'), set("ABCDEF"))];
        assert_eq!(coverage(&full).unwrap(), 1.0);
        let empty = vec![(rec('A', 'A'), set("")), (rec('B', 'B'), set(""))];
        assert_eq!(coverage(&empty).unwrap(), 0.0);
        assert!(coverage(&[]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let one_hot = PredictiveDistribution::from_pairs([(l('A'), 0.0), (l('B'), 1.0), (l('C'), 0.0)])
            .unwrap();
        assert_eq!(entropy(&one_hot, false), 0.0);
        assert_eq!(entropy(&one_hot, true), 0.0);
        let u4 = PredictiveDistribution::uniform(4).unwrap();
        assert!((entropy(&u4, false) - 2.0).abs() < 1e-12);
        for k in 2..=10 {
            let u = PredictiveDistribution::uniform(k).unwrap();
            assert!((entropy(&u, true) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_counts_empty_sets() {
        let ts = vec![(rec('A', 'A'), set("A")), (rec('B', 'A'), set(""))];
        let recs: Vec<_> = ts.iter().map(|(r, _)| r.clone()).collect();
        let m = evaluate(&ts, &recs).unwrap();
        assert_eq!(m.empty_set_count, 1);
        assert_eq!(m.n_test, 2);
        assert_eq!(m.set_size, 0.5);
        assert_eq!(m.coverage, 0.5);
        assert_eq!(m.accuracy, 0.5);
        // uniform over six options
        assert!((m.mean_entropy - 1.0).abs() < 1e-12);
        assert!((m.mean_entropy_bits - 6f64.log2()).abs() < 1e-12);
    }
}
