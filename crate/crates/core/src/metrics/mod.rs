//! Evaluation measures and multi-run summaries.

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::tree::StudentTree;

/// Counts (and amounts, for amount-weighted metrics) behind a value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub rows: usize,
    pub tp: Option<usize>,
    pub fp: Option<usize>,
    pub fn_: Option<usize>,
    pub tp_amount: Option<f64>,
    pub fn_amount: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub metric: String,
    pub value: f64,
    pub support: Support,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(Error::invalid("empty input"));
    }
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Confusion counts for `positive` against the rest.
pub fn binary_support(pred: &[usize], truth: &[usize], positive: usize) -> Result<Support> {
    check_lengths(pred.len(), truth.len())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Support {
        rows: pred.len(),
        tp: Some(tp),
        fp: Some(fp),
        fn_: Some(fn_),
        ..Support::default()
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

/// F1 of the `positive` class; 0 when precision and recall are both 0.
pub fn f1_binary(pred: &[usize], truth: &[usize], positive: usize) -> Result<f64> {
    let s = binary_support(pred, truth, positive)?;
    let (tp, fp, fn_) = (s.tp.unwrap() as f64, s.fp.unwrap() as f64, s.fn_.unwrap() as f64);
    Ok(harmonic(ratio(tp, tp + fp), ratio(tp, tp + fn_)))
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

fn amount_support(pred: &[usize], truth: &[usize], amounts: &[f64], positive: usize) -> Result<Support> {
    let mut s = binary_support(pred, truth, positive)?;
    check_lengths(pred.len(), amounts.len())?;
    if amounts.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::invalid("amounts must be finite and nonnegative"));
    }
    let (mut tp_amount, mut fn_amount) = (0.0, 0.0);
    for ((&p, &t), &a) in pred.iter().zip(truth).zip(amounts) {
        if t == positive {
            if p == positive {
                tp_amount += a;
            } else {
                fn_amount += a;
            }
        }
    }
    if s.tp.unwrap() + s.fn_.unwrap() == 0 {
        return Err(Error::invalid("no positive samples"));
    }
    s.tp_amount = Some(tp_amount);
    s.fn_amount = Some(fn_amount);
    Ok(s)
}

fn weighted_recall_of(s: &Support) -> Result<f64> {
    let (tp, fn_) = (s.tp_amount.unwrap(), s.fn_amount.unwrap());
    if tp + fn_ > 0.0 {
        Ok(tp / (tp + fn_))
    } else {
        Err(Error::invalid("positive samples carry zero total amount"))
    }
}

/// Recall in which every positive counts with its amount:
/// `amounts(TP) / amounts(TP + FN)`.
pub fn weighted_recall(pred: &[usize], truth: &[usize], amounts: &[f64], positive: usize) -> Result<f64> {
    weighted_recall_of(&amount_support(pred, truth, amounts, positive)?)
}

/// Harmonic mean of amount-weighted recall and count-based precision.
pub fn hybrid_f1(pred: &[usize], truth: &[usize], amounts: &[f64], positive: usize) -> Result<f64> {
    Ok(hybrid_f1_result(pred, truth, amounts, positive)?.value)
}

pub fn hybrid_f1_result(pred: &[usize], truth: &[usize], amounts: &[f64], positive: usize) -> Result<EvalResult> {
    let s = amount_support(pred, truth, amounts, positive)?;
    let recall = weighted_recall_of(&s)?;
    let (tp, fp) = (s.tp.unwrap() as f64, s.fp.unwrap() as f64);
    Ok(EvalResult {
        metric: "hybrid_f1".into(),
        value: harmonic(ratio(tp, tp + fp), recall),
        support: s,
    })
}

/// For each threshold, the fraction of rows with `|pred − truth| < threshold`.
pub fn error_proportions(pred: &[f64], truth: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| pred.iter().zip(truth).filter(|(p, y)| (*p - *y).abs() < t).count() as f64 / n)
        .collect())
}

/// Mean adjusted leaf entropy of `tree` on `d`; lower is more homogeneous.
///
/// Truth values are binned into `bins` equal-width bins over `[0, 1]`.
/// Inside a leaf each row adds `1 + |y − ȳ_leaf|` to its bin, the bin masses
/// are normalized, and the leaf scores their natural-log entropy. Leaves are
/// averaged weighted by their row counts.
pub fn leaf_homogeneity(tree: &StudentTree, d: &Dataset, truth: &[f64], bins: usize) -> Result<f64> {
    let leaves = tree.leaf_assignments(d.features())?;
    leaf_entropy(&leaves, truth, bins, 1.0)
}

/// [`leaf_homogeneity`] from precomputed leaf ids, with the deviation term
/// scaled by `deviation_weight`.
pub fn leaf_entropy(leaves: &[usize], truth: &[f64], bins: usize, deviation_weight: f64) -> Result<f64> {
    check_lengths(leaves.len(), truth.len())?;
    if bins < 2 {
        return Err(Error::invalid("need at least two bins"));
    }
    if truth.iter().any(|y| !(0.0..=1.0).contains(y)) {
        return Err(Error::invalid("truth values must lie in [0, 1]"));
    }
    let n_leaves = leaves.iter().max().unwrap() + 1;
    let mut members = vec![Vec::new(); n_leaves];
    for (i, &l) in leaves.iter().enumerate() {
        members[l].push(truth[i]);
    }
    let mut total = 0.0;
    for ys in members.iter().filter(|m| !m.is_empty()) {
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let mut mass = vec![0.0; bins];
        for &y in ys {
            let b = ((y * bins as f64) as usize).min(bins - 1);
            mass[b] += 1.0 + deviation_weight * (y - mean).abs();
        }
        let z: f64 = mass.iter().sum();
        let h: f64 = mass
            .iter()
            .filter(|&&m| m > 0.0)
            .map(|&m| {
                let q = m / z;
                -q * q.ln()
            })
            .sum();
        total += h * ys.len() as f64;
    }
    Ok(total / leaves.len() as f64)
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one run).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// `"mean (std)"` with both rounded to two decimals and trailing zeros
    /// dropped down to one decimal, e.g. `67.45 (1.0)`.
    pub fn cell(&self) -> String {
        self.cell_scaled(1.0, 2)
    }

    /// [`Summary::cell`] after multiplying by `factor`, rounded to `decimals`.
    pub fn cell_scaled(&self, factor: f64, decimals: usize) -> String {
        format!(
            "{} ({})",
            round_decimal(self.mean * factor, decimals),
            round_decimal(self.std * factor, decimals)
        )
    }
}

pub fn short_decimal(x: f64) -> String {
    round_decimal(x, 2)
}

/// Shortest form of `x` rounded to `decimals` places, keeping at least one.
pub fn round_decimal(x: f64, decimals: usize) -> String {
    let p = 10f64.powi(decimals as i32);
    let r = (x * p).round() / p;
    let r = if r == 0.0 { 0.0 } else { r };
    let s = format!("{r}");
    if s.contains('.') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::invalid("nothing to summarize"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(Summary { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_binary(&[1, 0, 1], &[1, 0, 1], 1).unwrap(), 1.0);
        // TP=1, FP=1, FN=1
        assert_eq!(f1_binary(&[1, 1, 0, 0], &[1, 0, 1, 0], 1).unwrap(), 0.5);
        assert_eq!(f1_binary(&[0, 0], &[0, 0], 1).unwrap(), 0.0);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[0.0, 1.0], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(mse(&[0.3, 0.2], &[0.3, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn fraud_micro_example() {
        // frauds with amounts 100 and 300, only the 300 one caught, one false alarm
        let truth = [1, 1, 0, 0];
        let pred = [0, 1, 1, 0];
        let amounts = [100.0, 300.0, 50.0, 20.0];
        assert_eq!(weighted_recall(&pred, &truth, &amounts, 1).unwrap(), 0.75);
        let r = hybrid_f1_result(&pred, &truth, &amounts, 1).unwrap();
        assert!((r.value - 0.6).abs() < 1e-12);
        assert_eq!((r.support.tp, r.support.fp, r.support.fn_), (Some(1), Some(1), Some(1)));
        assert_eq!(r.support.tp_amount, Some(300.0));
        assert!(weighted_recall(&[0, 0], &[0, 0], &[1.0, 1.0], 1).is_err());
        assert_eq!(hybrid_f1(&[1, 0], &[1, 0], &[5.0, 1.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn error_proportion_examples() {
        let p = error_proportions(&[0.03, 0.15], &[0.0, 0.0], &[0.05, 0.2]).unwrap();
        assert_eq!(p, vec![0.5, 1.0]);
        assert_eq!(error_proportions(&[0.4], &[0.4], &[0.05, 0.1, 0.2]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn entropy_examples() {
        // pure leaves
        assert_eq!(leaf_entropy(&[0, 0, 1, 1], &[0.1, 0.1, 0.9, 0.9], 20, 1.0).unwrap(), 0.0);
        // one row per bin, no deviation term
        let truth: Vec<f64> = (0..20).map(|b| (b as f64 + 0.5) / 20.0).collect();
        let h = leaf_entropy(&[0; 20], &truth, 20, 0.0).unwrap();
        assert!((h - 20f64.ln()).abs() < 1e-12);
        // the deviation term tilts mass toward outlying bins
        let h = leaf_entropy(&[0; 20], &truth, 20, 1.0).unwrap();
        assert!(h < 20f64.ln());
        assert!(leaf_entropy(&[0], &[1.5], 20, 1.0).is_err());
        assert!(leaf_entropy(&[0], &[0.5], 1, 1.0).is_err());
        // top edge falls in the last bin
        assert_eq!(leaf_entropy(&[0, 0], &[1.0, 0.99], 20, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn summaries() {
        let s = summarize(&[66.0, 68.0]).unwrap();
        assert_eq!(s.mean, 67.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(summarize(&[3.0]).unwrap().std, 0.0);
        assert!(summarize(&[]).is_err());
        let cell = |mean, std| Summary { mean, std, n: 10 }.cell();
        assert_eq!(cell(67.45, 1.0), "67.45 (1.0)");
        assert_eq!(cell(71.4, 1.04), "71.4 (1.04)");
        assert_eq!(cell(7.1449, 1.451), "7.14 (1.45)");
        assert_eq!(cell(85.8200001, 0.001), "85.82 (0.0)");
        assert_eq!(cell(-0.001, 0.0), "0.0 (0.0)");
    }

    proptest! {
        #[test]
        fn equal_amounts_reduce_to_counts(
            pairs in prop::collection::vec((0usize..2, 0usize..2), 1..60),
            amount in 0.01f64..1e4,
        ) {
            let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let amounts = vec![amount; pred.len()];
            let s = binary_support(&pred, &truth, 1).unwrap();
            let (tp, fn_) = (s.tp.unwrap(), s.fn_.unwrap());
            if tp + fn_ == 0 {
                prop_assert!(hybrid_f1(&pred, &truth, &amounts, 1).is_err());
            } else {
                let recall = tp as f64 / (tp + fn_) as f64;
                prop_assert!((weighted_recall(&pred, &truth, &amounts, 1).unwrap() - recall).abs() < 1e-12);
                let h = hybrid_f1(&pred, &truth, &amounts, 1).unwrap();
                prop_assert!((h - f1_binary(&pred, &truth, 1).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn weighted_recall_is_scale_invariant(
            pairs in prop::collection::vec((0usize..2, 0.0f64..100.0), 2..40),
            c in 0.01f64..100.0,
        ) {
            let truth: Vec<usize> = (0..pairs.len()).map(|i| usize::from(i % 2 == 0)).collect();
            let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let amounts: Vec<f64> = pairs.iter().map(|p| p.1 + 0.01).collect();
            let scaled: Vec<f64> = amounts.iter().map(|a| a * c).collect();
            let a = weighted_recall(&pred, &truth, &amounts, 1).unwrap();
            let b = weighted_recall(&pred, &truth, &scaled, 1).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn bounded_and_monotone(
            rows in prop::collection::vec((0usize..3, 0usize..3, -1.0f64..1.0, -1.0f64..1.0), 1..50),
        ) {
            let pred: Vec<usize> = rows.iter().map(|r| r.0).collect();
            let truth: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let acc = accuracy(&pred, &truth).unwrap();
            let f1 = f1_binary(&pred, &truth, 1).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc) && (0.0..=1.0).contains(&f1));
            let p: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let t: Vec<f64> = rows.iter().map(|r| r.3).collect();
            prop_assert!(mse(&p, &t).unwrap() >= 0.0);
            let props = error_proportions(&p, &t, &[0.05, 0.1, 0.2, 0.5, 1.0, 3.0]).unwrap();
            prop_assert!(props.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(props[5], 1.0);
        }
    }
}
