use ndarray::Array2;

use super::targets::{Provenance, TargetKind, TargetSet};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::teacher::{argmax, TeacherNet};

fn require_classifier(teacher: &TeacherNet) -> Result<()> {
    if teacher.is_classifier() {
        Ok(())
    } else {
        Err(Error::WrongTask {
            expected: "classification",
        })
    }
}

/// Teacher probabilities at temperature `t`.
pub fn soft_targets(teacher: &TeacherNet, d: &Dataset, t: f64) -> Result<TargetSet> {
    require_classifier(teacher)?;
    let p = teacher.predict_proba(d.features(), t)?;
    TargetSet::new(
        TargetKind::Soft,
        p,
        Provenance {
            method: if t == 1.0 { "vanilla" } else { "label_smoothing" }.into(),
            temperature: Some(t),
            teacher: Some(teacher.fingerprint()),
            ..Provenance::default()
        },
    )
}

/// Raw teacher logits as regression targets.
pub fn matching_logits(teacher: &TeacherNet, d: &Dataset) -> Result<TargetSet> {
    require_classifier(teacher)?;
    let z = teacher.predict_logits(d.features())?;
    TargetSet::new(
        TargetKind::Logits,
        z,
        Provenance {
            method: "matching_logits".into(),
            teacher: Some(teacher.fingerprint()),
            ..Provenance::default()
        },
    )
}

/// On every row whose argmax is not the true class, swaps the true-class
/// probability with the predicted-class one.
pub fn probability_shift(soft: &TargetSet, labels: &[usize]) -> Result<TargetSet> {
    if soft.kind() != TargetKind::Soft {
        return Err(Error::invalid("probability shift needs soft targets"));
    }
    if labels.len() != soft.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: soft.n_rows(),
            got: labels.len(),
        });
    }
    let k = soft.n_cols();
    let mut v = soft.values().to_owned();
    for (mut row, &y) in v.rows_mut().into_iter().zip(labels) {
        if y >= k {
            return Err(Error::invalid(format!("label {y} out of range for {k} classes")));
        }
        let a = argmax(row.view());
        // equal values need no swap
        if a != y && row[y] < row[a] {
            row.swap(a, y);
        }
    }
    let provenance = Provenance {
        method: "probability_shift".into(),
        ..soft.provenance().clone()
    };
    TargetSet::new(TargetKind::Soft, v, provenance)
}

/// `alpha · hard + (1 − alpha) · soft`, row by row.
pub fn mixed_labels(soft: &TargetSet, hard: &TargetSet, alpha: f64) -> Result<TargetSet> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if soft.kind() != TargetKind::Soft || hard.kind() != TargetKind::Hard {
        return Err(Error::invalid("mixed labels need soft and hard targets"));
    }
    if soft.values().dim() != hard.values().dim() {
        return Err(Error::DimensionMismatch {
            expected: soft.n_cols(),
            got: hard.n_cols(),
        });
    }
    let mut v: Array2<f64> = soft.values().to_owned();
    v.zip_mut_with(&hard.values(), |s, &h| *s = alpha * h + (1.0 - alpha) * *s);
    let provenance = Provenance {
        method: "mixed_labels".into(),
        alpha: Some(alpha),
        ..soft.provenance().clone()
    };
    TargetSet::new(TargetKind::Soft, v, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Targets;
    use crate::teacher::{softmax_t, Activation, InputScaler, Layer, OutputKind};
    use ndarray::{array, Array1};

    fn soft(v: Array2<f64>) -> TargetSet {
        TargetSet::new(TargetKind::Soft, v, Provenance::method("vanilla")).unwrap()
    }

    /// Linear teacher whose logits equal `x · w`.
    fn linear_teacher(w: Array2<f64>) -> TeacherNet {
        let k = w.nrows();
        let f = w.ncols();
        TeacherNet::from_layers(
            vec![Layer {
                weights: w,
                bias: Array1::zeros(k),
                activation: Activation::Identity,
                dropout: 0.0,
            }],
            OutputKind::Classifier { classes: k },
            InputScaler::identity(f),
        )
        .unwrap()
    }

    #[test]
    fn zero_logits_give_uniform_rows() {
        let t = linear_teacher(Array2::zeros((4, 2)));
        let d = Dataset::from_matrix(array![[1.0, 2.0], [3.0, -1.0]], None, 0).unwrap();
        let s = soft_targets(&t, &d, 1.0).unwrap();
        assert!(s.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_eq!(s.provenance().teacher.as_deref(), Some(t.fingerprint().as_str()));
    }

    #[test]
    fn logits_are_consistent_with_probabilities() {
        let t = linear_teacher(array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
        let d = Dataset::from_matrix(array![[1.0, 2.0], [3.0, -1.0]], None, 0).unwrap();
        let z = matching_logits(&t, &d).unwrap();
        let p = soft_targets(&t, &d, 1.0).unwrap();
        for (zr, pr) in z.values().rows().into_iter().zip(p.values().rows()) {
            let s = softmax_t(zr, 1.0).unwrap();
            for (a, b) in s.iter().zip(pr) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(z.kind(), TargetKind::Logits);
    }

    #[test]
    fn regression_teacher_is_rejected() {
        let t = TeacherNet::from_layers(
            vec![Layer {
                weights: Array2::zeros((1, 2)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
                dropout: 0.0,
            }],
            OutputKind::Regressor,
            InputScaler::identity(2),
        )
        .unwrap();
        let d = Dataset::from_matrix(array![[1.0, 2.0]], Some(Targets::Continuous(vec![0.0])), 0).unwrap();
        assert!(soft_targets(&t, &d, 1.0).is_err());
        assert!(matching_logits(&t, &d).is_err());
    }

    #[test]
    fn shift_examples() {
        let s = soft(array![[0.7, 0.3], [0.1, 0.9]]);
        let out = probability_shift(&s, &[1, 1]).unwrap();
        assert_eq!(out.values(), array![[0.3, 0.7], [0.1, 0.9]]);
        assert!(probability_shift(&s, &[1]).is_err());
        assert!(probability_shift(&s, &[1, 2]).is_err());
    }

    #[test]
    fn mixed_examples() {
        let s = soft(array![[0.6, 0.4]]);
        let h = TargetSet::new(TargetKind::Hard, array![[1.0, 0.0]], Provenance::method("hard")).unwrap();
        assert_eq!(mixed_labels(&s, &h, 0.5).unwrap().values(), array![[0.8, 0.2]]);
        assert_eq!(mixed_labels(&s, &h, 1.0).unwrap().values(), h.values());
        assert_eq!(mixed_labels(&s, &h, 0.0).unwrap().values(), s.values());
        assert!(mixed_labels(&s, &h, 1.5).is_err());
        assert!(mixed_labels(&h, &s, 0.5).is_err());
    }
}
