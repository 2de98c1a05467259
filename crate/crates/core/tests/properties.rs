//! Property tests for normalization, scores, calibration, metrics and ingest.

use std::collections::BTreeMap;

use confbench_core::bench::{aggregate, BenchmarkReport, Dimension, ReportRow, RowMetrics};
use confbench_core::conformal::{calibrate, predict_set, CalibrationScores, ConformalThreshold, Threshold};
use confbench_core::ingest::{pad_options, parse_reader, to_jsonl, DatasetProfile};
use confbench_core::metrics::entropy;
use confbench_core::scoring::score;
use confbench_core::{argmax, normalize, EvalRecord, OptionLabel, PredictiveDistribution, ScoreFunction};
use proptest::prelude::*;

fn label(i: usize) -> OptionLabel {
    OptionLabel::from_index(i).unwrap()
}

fn scores_map(values: &[f64]) -> BTreeMap<OptionLabel, f64> {
    values.iter().enumerate().map(|(i, v)| (label(i), *v)).collect()
}

/// Distributions over 2..=10 labels. Half the time the weights come from a
/// small integer alphabet so exact ties are common.
fn distribution() -> impl Strategy<Value = PredictiveDistribution> {
    let tied = prop::collection::vec(0u8..4, 2..=10).prop_map(|w| w.into_iter().map(f64::from).collect::<Vec<_>>());
    let smooth = prop::collection::vec(0.0f64..1.0, 2..=10);
    prop_oneof![tied, smooth]
        .prop_filter("needs positive mass", |w| w.iter().sum::<f64>() > 0.0)
        .prop_map(|w| {
            let total: f64 = w.iter().sum();
            let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            PredictiveDistribution::new((0..probs.len()).map(label).collect(), probs).unwrap()
        })
}

/// APS by brute force: walk labels in descending probability and stop after
/// the last label tied with `y`.
fn aps_oracle(dist: &PredictiveDistribution, y: OptionLabel) -> f64 {
    let py = dist.prob(y).unwrap();
    let mut sorted: Vec<f64> = dist.probs().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for p in sorted {
        if p < py {
            break;
        }
        acc += p;
    }
    acc
}

fn permuted(dist: &PredictiveDistribution, perm: &[usize]) -> PredictiveDistribution {
    PredictiveDistribution::from_pairs(dist.iter().enumerate().map(|(i, (_, p))| (label(perm[i]), p))).unwrap()
}

fn rank_oracle(n: usize, alpha_num: usize, alpha_den: usize) -> usize {
    // ceil((n + 1)(den - num) / den) in integers
    ((n + 1) * (alpha_den - alpha_num)).div_ceil(alpha_den)
}

fn qhat_order(t: Threshold) -> f64 {
    t.value().unwrap_or(f64::INFINITY)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn normalize_sums_to_one(values in prop::collection::vec(-500.0f64..500.0, 2..=10)) {
        let d = normalize(&scores_map(&values)).unwrap();
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn aps_matches_sort_and_accumulate(dist in distribution()) {
        for &y in dist.labels() {
            let got = score(&dist, y, ScoreFunction::Aps).unwrap();
            prop_assert!((got - aps_oracle(&dist, y)).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn normalize_is_shift_invariant(
        values in prop::collection::vec(-50.0f64..50.0, 2..=10),
        shift in -100.0f64..100.0,
    ) {
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let a = normalize(&scores_map(&values)).unwrap();
        let b = normalize(&scores_map(&shifted)).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn argmax_follows_raw_maximum(values in prop::collection::vec(-5i8..5, 2..=10)) {
        let raw: Vec<f64> = values.iter().map(|v| f64::from(*v)).collect();
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first = raw.iter().position(|v| *v == max).unwrap();
        prop_assert_eq!(argmax(&normalize(&scores_map(&raw)).unwrap()), label(first));
    }

    #[test]
    fn lac_orders_inversely_to_probability(dist in distribution()) {
        for (a, pa) in dist.iter() {
            for (b, pb) in dist.iter() {
                let sa = score(&dist, a, ScoreFunction::Lac).unwrap();
                let sb = score(&dist, b, ScoreFunction::Lac).unwrap();
                prop_assert_eq!(sa < sb, pa > pb);
                prop_assert!((sa - (1.0 - pa)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn aps_dominates_own_mass(dist in distribution()) {
        for (y, p) in dist.iter() {
            prop_assert!(score(&dist, y, ScoreFunction::Aps).unwrap() >= p);
        }
        let top = argmax(&dist);
        let ptop = dist.prob(top).unwrap();
        if dist.probs().iter().filter(|p| **p == ptop).count() == 1 {
            prop_assert_eq!(score(&dist, top, ScoreFunction::Aps).unwrap(), ptop);
        }
    }

    #[test]
    fn margins_match_direct_formulas(dist in distribution()) {
        let mut sorted = dist.probs().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let paper = score(&dist, dist.labels()[0], ScoreFunction::MarginPaper).unwrap();
        prop_assert!((paper - (sorted[0] - sorted[1])).abs() <= 1e-12);
        for (y, p) in dist.iter() {
            prop_assert_eq!(score(&dist, y, ScoreFunction::MarginPaper).unwrap().to_bits(), paper.to_bits());
            let best_other = dist.iter().filter(|(l, _)| *l != y).map(|(_, q)| q).fold(f64::NEG_INFINITY, f64::max);
            let label_margin = score(&dist, y, ScoreFunction::MarginLabel).unwrap();
            prop_assert!((label_margin - (best_other - p)).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&label_margin));
        }
    }

    #[test]
    fn scores_are_permutation_equivariant(
        (dist, perm) in distribution().prop_flat_map(|d| {
            let n = d.len();
            (Just(d), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
        })
    ) {
        let moved = permuted(&dist, &perm);
        for func in ScoreFunction::ALL {
            for (i, &y) in dist.labels().iter().enumerate() {
                let a = score(&dist, y, func).unwrap();
                let b = score(&moved, label(perm[i]), func).unwrap();
                prop_assert!((a - b).abs() <= 1e-12, "{func}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn calibrate_matches_sort_oracle(
        scores in prop::collection::vec(-1.0f64..1.0, 1..=500),
        alpha_idx in 0usize..3,
    ) {
        let (num, den) = [(1, 20), (1, 10), (1, 5)][alpha_idx];
        let alpha = num as f64 / den as f64;
        let th = calibrate(&CalibrationScores::new(scores.clone(), ScoreFunction::Lac).unwrap(), alpha).unwrap();
        let k = rank_oracle(scores.len(), num, den);
        if k > scores.len() {
            prop_assert_eq!(th.qhat, Threshold::IncludeAll);
        } else {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert_eq!(th.qhat, Threshold::Value(sorted[k - 1]));
        }
    }

    #[test]
    fn smaller_alpha_never_lowers_qhat(
        scores in prop::collection::vec(0.0f64..1.0, 1..=200),
        a in 0.01f64..0.99,
        b in 0.01f64..0.99,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let cal = CalibrationScores::new(scores, ScoreFunction::Aps).unwrap();
        let q_lo = qhat_order(calibrate(&cal, lo).unwrap().qhat);
        let q_hi = qhat_order(calibrate(&cal, hi).unwrap().qhat);
        prop_assert!(q_lo >= q_hi);
    }

    #[test]
    fn raising_qhat_never_shrinks_sets(dist in distribution(), q1 in -1.0f64..1.2, q2 in -1.0f64..1.2) {
        let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
        for func in ScoreFunction::ALL {
            let th = |q| ConformalThreshold { qhat: Threshold::Value(q), alpha: 0.1, n: 10, score_fn: func };
            let small = predict_set(&dist, &th(lo));
            let large = predict_set(&dist, &th(hi));
            prop_assert!(small.is_subset(&large));
            let all = ConformalThreshold { qhat: Threshold::IncludeAll, ..th(hi) };
            prop_assert!(large.is_subset(&predict_set(&dist, &all)));
            prop_assert_eq!(predict_set(&dist, &all).len(), dist.len());
        }
    }

    #[test]
    fn entropy_peaks_only_at_uniform(
        k in 2usize..=10,
        noise in prop::collection::vec(-0.5f64..0.5, 10),
        perm_seed in any::<u64>(),
    ) {
        let raw: Vec<f64> = noise[..k].iter().map(|e| 1.0 + e).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let dist = PredictiveDistribution::new((0..k).map(label).collect(), probs.clone()).unwrap();
        let h = entropy(&dist, false);
        let max = (k as f64).log2();
        prop_assert!(h <= max + 1e-12);
        let is_uniform = probs.iter().all(|p| (p - 1.0 / k as f64).abs() < 1e-9);
        if !is_uniform {
            prop_assert!(h < max);
        }
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left((perm_seed % k as u64) as usize);
        prop_assert!((entropy(&permuted(&dist, &perm), false) - h).abs() <= 1e-12);
        let hn = entropy(&dist, true);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&hn));
    }

    #[test]
    fn padding_barely_moves_existing_options(
        mask in prop::collection::vec(any::<bool>(), 10),
        values in prop::collection::vec(-30.0f64..5.0, 10),
    ) {
        let letters: Vec<usize> = (0..10).filter(|i| mask[*i]).collect();
        prop_assume!(letters.len() >= 2);
        let logprobs: BTreeMap<_, _> = letters.iter().map(|&i| (label(i), values[i])).collect();
        let rec = EvalRecord {
            record_id: "r".into(),
            dataset_id: "MMMU-Pro".into(),
            model_id: "m".into(),
            logprobs,
            true_label: label(letters[0]),
            predicted_label: label(letters[1]),
            multi_image: false,
        };
        let profile = DatasetProfile::lookup("MMMU-Pro").unwrap();
        let padded = pad_options(&rec, &profile).unwrap();
        prop_assert_eq!(padded.logprobs.len(), 10);
        let before = rec.distribution().unwrap();
        let after = padded.distribution().unwrap();
        for (l, p) in before.iter() {
            prop_assert!((after.prob(l).unwrap() - p).abs() <= 1e-6);
        }
    }

    #[test]
    fn jsonl_round_trips(recs in prop::collection::vec(
        (prop::collection::vec(-50.0f64..10.0, 2..=10), any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<bool>()),
        0..20,
    )) {
        let records: Vec<EvalRecord> = recs.iter().enumerate().map(|(i, (vals, t, p, multi))| EvalRecord {
            record_id: format!("id-{i}"),
            dataset_id: "AI2D".into(),
            model_id: "model \"quoted\"".into(),
            logprobs: scores_map(vals),
            true_label: label(t.index(vals.len())),
            predicted_label: label(p.index(vals.len())),
            multi_image: *multi,
        }).collect();
        let text = to_jsonl(&records);
        prop_assert_eq!(parse_reader(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn global_mean_is_weighted_mean_of_groups(rows in prop::collection::vec((0usize..3, 0usize..4, 0u32..=20, 1u32..=20), 1..40)) {
        let report = BenchmarkReport::new(rows.iter().enumerate().map(|(i, (m, d, hits, n))| {
            let hits = (*hits).min(*n);
            ReportRow {
                model_id: format!("m{m}"),
                dataset_id: format!("d{d}"),
                score_fn: ScoreFunction::Lac,
                alpha: 0.1,
                seed: i as u64,
                outcome: Ok(RowMetrics {
                    n_cal: *n as usize, n_test: *n as usize, qhat: Threshold::Value(0.5),
                    accuracy: f64::from(hits) / f64::from(*n), set_size: 1.0 + f64::from(hits) / 7.0,
                    coverage: 0.9, mean_entropy: 0.3, empty_sets: 0,
                }),
            }
        }).collect());
        let global = aggregate(&report, &[]).unwrap();
        for dim in [Dimension::Dataset, Dimension::Model] {
            let groups = aggregate(&report, &[dim]).unwrap();
            let total: usize = groups.iter().map(|g| g.count).sum();
            let weighted: f64 = groups.iter().map(|g| g.accuracy * g.count as f64).sum::<f64>() / total as f64;
            prop_assert!((weighted - global[0].accuracy).abs() <= 1e-12);
            let weighted_ss: f64 = groups.iter().map(|g| g.set_size * g.count as f64).sum::<f64>() / total as f64;
            prop_assert!((weighted_ss - global[0].set_size).abs() <= 1e-12);
        }
    }
}
