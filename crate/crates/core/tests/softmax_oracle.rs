//! Extended-precision softmax oracle for large, nearly equal scores.

use std::collections::BTreeMap;

use confbench_core::{normalize, OptionLabel};
use num_bigint::BigInt;

const DIGITS: u32 = 60;

fn scale() -> BigInt {
    BigInt::from(10).pow(DIGITS)
}

/// exp(-m) for a small non-negative integer m, as a fixed-point integer with
/// `DIGITS` decimals, via the alternating Taylor series.
fn exp_neg(m: u32) -> BigInt {
    let s = scale();
    let x = BigInt::from(m);
    let mut term = s.clone();
    let mut sum = s.clone();
    for k in 1..400u32 {
        term = -(&term * &x) / BigInt::from(k);
        if term == BigInt::from(0) {
            break;
        }
        sum += &term;
    }
    sum
}

fn fixed_to_f64(v: &BigInt) -> f64 {
    let digits = v.to_string();
    let padded = format!("{:0>width$}", digits, width = DIGITS as usize + 1);
    let (int, frac) = padded.split_at(padded.len() - DIGITS as usize);
    format!("{int}.{frac}").parse().unwrap()
}

/// Softmax of integer scores in extended precision: p_i = e^{x_i - max} / sum_j e^{x_j - max}.
fn oracle(scores: &[i64]) -> Vec<f64> {
    let max = *scores.iter().max().unwrap();
    let weights: Vec<BigInt> = scores.iter().map(|x| exp_neg((max - x) as u32)).collect();
    let total: BigInt = weights.iter().sum();
    weights
        .iter()
        .map(|w| fixed_to_f64(&(w * scale() / &total)))
        .collect()
}

#[test]
fn oracle_sanity() {
    // e^-1 to 15 places
    assert!((fixed_to_f64(&exp_neg(1)) - 0.367_879_441_171_442_3).abs() < 1e-15);
    let p = oracle(&[0, 0]);
    assert_eq!(p, vec![0.5, 0.5]);
}

#[test]
fn large_scores_match_extended_precision() {
    let scores = [1000i64, 1000, 999];
    let want = oracle(&scores);
    let input: BTreeMap<_, _> = scores
        .iter()
        .enumerate()
        .map(|(i, s)| (OptionLabel::from_index(i).unwrap(), *s as f64))
        .collect();
    let got = normalize(&input).unwrap();
    for (g, w) in got.probs().iter().zip(&want) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
    assert!(got.probs().iter().all(|p| p.is_finite()));
}

#[test]
fn wide_integer_gaps_match_extended_precision() {
    for scores in [
        vec![-5i64, 3, 0, 7, 7, -40],
        vec![700, 690, 705, 701],
        vec![-1000, -1001, -1002, -1003, -1004, -1005, -1006, -1007, -1008, -1009],
    ] {
        let want = oracle(&scores);
        let input: BTreeMap<_, _> = scores
            .iter()
            .enumerate()
            .map(|(i, s)| (OptionLabel::from_index(i).unwrap(), *s as f64))
            .collect();
        let got = normalize(&input).unwrap();
        for (g, w) in got.probs().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{scores:?}: {g} vs {w}");
        }
    }
}
