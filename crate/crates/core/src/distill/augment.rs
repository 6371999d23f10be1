use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::targets::TargetSet;
use super::tune::best_candidate;
use crate::dataio::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, mse};
use crate::rng::substream;
use crate::teacher::TeacherNet;
use crate::tree::{StudentTree, TreeParams};

/// Rows of an `n`-row pool drawn for `fraction`: `fraction · n` rounded to
/// the nearest integer, as distinct sorted indices. Smaller fractions draw a
/// prefix of the same shuffled order, so the drawn sets are nested.
pub fn augmentation_rows(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("augmentation fraction {fraction} outside [0, 1]")));
    }
    let k = (fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "augment"));
    let mut take = order[..k.min(n)].to_vec();
    take.sort_unstable();
    Ok(take)
}

/// Teacher predictions as dataset targets.
pub fn teacher_labels(teacher: &TeacherNet, d: &Dataset) -> Result<Targets> {
    if teacher.is_classifier() {
        Ok(Targets::Classes(teacher.predict_class(d.features())?))
    } else {
        Ok(Targets::Continuous(teacher.predict_value(d.features())?))
    }
}

/// `labeled` followed by a teacher-labeled sample of `unlabeled`.
pub fn augment(labeled: &Dataset, unlabeled: &Dataset, teacher: &TeacherNet, fraction: f64, seed: u64) -> Result<Dataset> {
    let rows = augmentation_rows(unlabeled.n_rows(), fraction, seed)?;
    if rows.is_empty() {
        return Ok(labeled.clone());
    }
    let extra = unlabeled.select(&rows).strip_targets();
    let extra = extra.with_targets(teacher_labels(teacher, &extra)?)?;
    labeled.concat(&extra)
}

/// Validation error of a pilot student per candidate fraction, and the
/// selected fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionSweep {
    pub fraction: f64,
    /// `(fraction, validation error)` in grid order. The error is MSE for
    /// regression and the misclassification rate for classification.
    pub points: Vec<(f64, f64)>,
}

/// Fits a pilot tree on `augment(labeled, unlabeled, teacher, f)` for every
/// candidate `f` and keeps the one with the lowest validation error; ties go
/// to the smaller fraction.
pub fn select_fraction(
    labeled: &Dataset,
    unlabeled: &Dataset,
    teacher: &TeacherNet,
    candidates: &[f64],
    pilot: TreeParams,
    valid: &Dataset,
    seed: u64,
) -> Result<FractionSweep> {
    if candidates.is_empty() {
        return Err(Error::invalid("empty fraction grid"));
    }
    let errors: Vec<f64> = candidates
        .par_iter()
        .map(|&f| -> Result<f64> {
            let d = augment(labeled, unlabeled, teacher, f, seed)?;
            let tree = StudentTree::fit(&d, &TargetSet::from_dataset(&d)?, None, pilot)?;
            validation_error(&tree, valid)
        })
        .collect::<Result<_>>()?;
    let best = best_candidate(candidates, &errors, false);
    Ok(FractionSweep {
        fraction: candidates[best],
        points: candidates.iter().copied().zip(errors).collect(),
    })
}

fn validation_error(tree: &StudentTree, valid: &Dataset) -> Result<f64> {
    match valid.targets() {
        Some(Targets::Continuous(y)) => mse(&tree.predict_values(valid.features())?, y),
        Some(Targets::Classes(c)) => Ok(1.0 - accuracy(&tree.predict_classes(valid.features())?, c)?),
        None => Err(Error::invalid("validation set has no targets")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_nested_and_reproducible() {
        let a = augmentation_rows(1000, 0.02, 5).unwrap();
        let b = augmentation_rows(1000, 0.05, 5).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(b.len(), 50);
        assert!(a.iter().all(|i| b.contains(i)));
        assert_eq!(a, augmentation_rows(1000, 0.02, 5).unwrap());
        assert_ne!(a, augmentation_rows(1000, 0.02, 6).unwrap());
        assert!(augmentation_rows(10, 1.5, 0).is_err());
        assert!(augmentation_rows(10, 0.0, 0).unwrap().is_empty());
    }

    #[test]
    fn sgemm_counts() {
        // unlabeled pool of the SGEMM split
        assert_eq!(augmentation_rows(236_768, 0.01, 0).unwrap().len(), 2_368);
        assert_eq!(augmentation_rows(236_768, 0.05, 0).unwrap().len(), 11_838);
    }
}
