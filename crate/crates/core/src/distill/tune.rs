use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::soft::{mixed_labels, soft_targets};
use super::targets::TargetSet;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{accuracy, f1_binary};
use crate::teacher::TeacherNet;
use crate::tree::{StudentTree, TreeParams};

/// Validation score maximized when tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SelectionMetric {
    Accuracy,
    /// Binary F1 of the given positive class, for imbalanced problems.
    F1 { positive: usize },
}

impl SelectionMetric {
    pub fn score(&self, pred: &[usize], truth: &[usize]) -> Result<f64> {
        match *self {
            SelectionMetric::Accuracy => accuracy(pred, truth),
            SelectionMetric::F1 { positive } => f1_binary(pred, truth, positive),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub params: TreeParams,
    pub metric: SelectionMetric,
}

/// Index of the best score; among equal scores the smallest candidate wins.
pub(crate) fn best_candidate(candidates: &[f64], scores: &[f64], maximize: bool) -> usize {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[a].total_cmp(&candidates[b]));
    let mut best = order[0];
    for &i in &order[1..] {
        let better = if maximize { scores[i] > scores[best] } else { scores[i] < scores[best] };
        if better {
            best = i;
        }
    }
    best
}

/// Picks the mixing weight whose student scores best on `valid`.
pub fn tune_alpha(
    teacher: &TeacherNet,
    train: &Dataset,
    valid: &Dataset,
    candidates: &[f64],
    student: &StudentConfig,
) -> Result<f64> {
    let soft = soft_targets(teacher, train, 1.0)?;
    let hard = TargetSet::from_dataset(train)?;
    let alphas = tune_alpha_per_depth(
        &soft,
        &hard,
        train,
        valid,
        candidates,
        &[student.params.max_depth],
        student.params.min_samples_leaf,
        student.metric,
    )?;
    Ok(alphas[0])
}

/// The best mixing weight for each depth in `depths`. One tree per candidate
/// is grown to the deepest depth and truncated for the shallower ones.
#[allow(clippy::too_many_arguments)]
pub fn tune_alpha_per_depth(
    soft: &TargetSet,
    hard: &TargetSet,
    train: &Dataset,
    valid: &Dataset,
    candidates: &[f64],
    depths: &[usize],
    min_samples_leaf: usize,
    metric: SelectionMetric,
) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty alpha grid"));
    }
    let Some(&max_depth) = depths.iter().max() else {
        return Err(Error::invalid("no depths to tune for"));
    };
    if candidates.len() == 1 {
        return Ok(vec![candidates[0]; depths.len()]);
    }
    let truth = valid.classes()?;
    let params = TreeParams {
        max_depth,
        min_samples_leaf,
    };
    // scores[candidate][depth]
    let scores: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|&alpha| -> Result<Vec<f64>> {
            let targets = mixed_labels(soft, hard, alpha)?;
            let tree = StudentTree::fit(train, &targets, None, params)?;
            depths
                .iter()
                .map(|&d| {
                    let pred = tree.truncate(d).predict_classes(valid.features())?;
                    metric.score(&pred, truth)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..depths.len())
        .map(|j| {
            let column: Vec<f64> = scores.iter().map(|s| s[j]).collect();
            candidates[best_candidate(candidates, &column, true)]
        })
        .collect())
}
