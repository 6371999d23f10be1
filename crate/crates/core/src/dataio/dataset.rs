use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature column is interpreted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// Cells hold an index into `levels`, which lists the observed level
    /// strings in lexicographic order. `declared` is the level set promised by
    /// the schema, checked when the column is one-hot encoded.
    Categorical {
        levels: Vec<String>,
        declared: Option<Vec<String>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }
}

/// Per-row targets.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Continuous(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
            Targets::Continuous(v) => Targets::Continuous(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    fn concat(&self, other: &Targets) -> Result<Targets> {
        match (self, other) {
            (Targets::Classes(a), Targets::Classes(b)) => {
                Ok(Targets::Classes(a.iter().chain(b).copied().collect()))
            }
            (Targets::Continuous(a), Targets::Continuous(b)) => {
                Ok(Targets::Continuous(a.iter().chain(b).copied().collect()))
            }
            _ => Err(Error::invalid("cannot concatenate class and continuous targets")),
        }
    }
}

/// A feature matrix with optional targets.
///
/// Rows carry the id they had in the dataset they were loaded from, so any
/// partition of a dataset can be checked against its source. Datasets whose
/// targets were stripped keep the ground truth in a hidden slot that the
/// training code never reads; it is reachable only through
/// [`Dataset::hidden_truth`] for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    meta: Vec<FeatureMeta>,
    targets: Option<Targets>,
    hidden: Option<Targets>,
    num_classes: usize,
    class_names: Vec<String>,
    row_ids: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset, checking shape, finiteness and label range.
    /// `num_classes` is 0 for regression or unlabeled data.
    pub fn new(
        features: Array2<f64>,
        meta: Vec<FeatureMeta>,
        targets: Option<Targets>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if meta.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                got: meta.len(),
            });
        }
        if let Some(bad) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature value at row {}",
                bad / features.ncols().max(1)
            )));
        }
        if let Some(t) = &targets {
            if t.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: t.len(),
                });
            }
            match t {
                Targets::Classes(c) => {
                    if num_classes == 0 {
                        return Err(Error::invalid("class targets need num_classes >= 1"));
                    }
                    if let Some(&bad) = c.iter().find(|&&c| c >= num_classes) {
                        return Err(Error::invalid(format!(
                            "label {bad} out of range for {num_classes} classes"
                        )));
                    }
                }
                Targets::Continuous(v) => {
                    if v.iter().any(|y| !y.is_finite()) {
                        return Err(Error::invalid("non-finite regression target"));
                    }
                }
            }
        }
        let class_names = (0..num_classes).map(|k| k.to_string()).collect();
        Ok(Self {
            features,
            meta,
            targets,
            hidden: None,
            num_classes,
            class_names,
            row_ids: (0..n).collect(),
        })
    }

    /// All-numeric dataset with generated column names.
    pub fn from_matrix(features: Array2<f64>, targets: Option<Targets>, num_classes: usize) -> Result<Self> {
        let meta = (0..features.ncols()).map(|j| FeatureMeta::numeric(format!("x{j}"))).collect();
        Self::new(features, meta, targets, num_classes)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::DimensionMismatch {
                expected: self.num_classes,
                got: names.len(),
            });
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn meta(&self) -> &[FeatureMeta] {
        &self.meta
    }

    pub fn targets(&self) -> Option<&Targets> {
        self.targets.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn is_classification(&self) -> bool {
        self.num_classes > 0
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn classes(&self) -> Result<&[usize]> {
        match &self.targets {
            Some(Targets::Classes(c)) => Ok(c),
            _ => Err(Error::WrongTask {
                expected: "class",
            }),
        }
    }

    pub fn continuous(&self) -> Result<&[f64]> {
        match &self.targets {
            Some(Targets::Continuous(v)) => Ok(v),
            _ => Err(Error::WrongTask {
                expected: "continuous",
            }),
        }
    }

    /// Ground truth of a dataset whose labels were stripped. For evaluation
    /// and diagnostics only.
    pub fn hidden_truth(&self) -> Option<&Targets> {
        self.hidden.as_ref()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), idx),
            meta: self.meta.clone(),
            targets: self.targets.as_ref().map(|t| t.select(idx)),
            hidden: self.hidden.as_ref().map(|t| t.select(idx)),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Moves the targets into the hidden slot.
    pub fn strip_targets(&self) -> Dataset {
        let mut out = self.clone();
        if let Some(t) = out.targets.take() {
            out.hidden = Some(t);
        }
        out
    }

    /// Same rows with new targets. The hidden slot is cleared.
    pub fn with_targets(&self, targets: Targets) -> Result<Dataset> {
        if targets.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                got: targets.len(),
            });
        }
        if let Targets::Classes(c) = &targets {
            if c.iter().any(|&c| c >= self.num_classes) {
                return Err(Error::invalid("label out of range"));
            }
        }
        let mut out = self.clone();
        out.targets = Some(targets);
        out.hidden = None;
        Ok(out)
    }

    /// Replaces features and metadata, keeping rows, targets and ids.
    pub(crate) fn with_features(&self, features: Array2<f64>, meta: Vec<FeatureMeta>) -> Dataset {
        debug_assert_eq!(features.nrows(), self.n_rows());
        debug_assert_eq!(features.ncols(), meta.len());
        Dataset {
            features,
            meta,
            targets: self.targets.clone(),
            hidden: self.hidden.clone(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`. Both must be labeled the
    /// same way and share the feature layout.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_features() != other.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: other.n_features(),
            });
        }
        let targets = match (&self.targets, &other.targets) {
            (Some(a), Some(b)) => Some(a.concat(b)?),
            (None, None) => None,
            _ => return Err(Error::invalid("cannot concatenate labeled with unlabeled rows")),
        };
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Dataset {
            features,
            meta: self.meta.clone(),
            targets,
            hidden: None,
            num_classes: self.num_classes.max(other.num_classes),
            class_names: if self.num_classes >= other.num_classes {
                self.class_names.clone()
            } else {
                other.class_names.clone()
            },
            row_ids: self.row_ids.iter().chain(&other.row_ids).copied().collect(),
        })
    }

    /// Per-class row counts; empty for regression.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        if let Some(Targets::Classes(c)) = &self.targets {
            for &c in c {
                counts[c] += 1;
            }
        }
        counts
    }

}
