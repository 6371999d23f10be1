use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

/// Fractions of the rows assigned to each part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportions {
    pub train: f64,
    #[serde(default)]
    pub valid: f64,
    #[serde(default)]
    pub test: f64,
    #[serde(default)]
    pub unlabeled: f64,
}

impl Proportions {
    fn as_array(&self) -> [f64; 4] {
        [self.train, self.valid, self.test, self.unlabeled]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub proportions: Proportions,
    pub seed: u64,
    pub stratified: bool,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.proportions.as_array();
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("split proportions must be nonnegative"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split proportions sum to {sum}, not 1")));
        }
        if self.proportions.train <= 0.0 {
            return Err(Error::invalid("train proportion must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Targets moved to the hidden slot.
    pub unlabeled: Dataset,
}

/// Largest-remainder apportionment of `n` items; ties go to the earlier part.
pub(crate) fn apportion(n: usize, p: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = p.iter().map(|&q| q * n as f64).collect();
    // 1e-9 absorbs representation error in fractions like 4/250
    let mut counts: Vec<usize> = exact.iter().map(|&e| (e + 1e-9).floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut k = 0;
    while assigned < n && !order.is_empty() {
        counts[order[k % order.len()]] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > n {
        // only reachable through the rounding slack above
        let i = counts.iter().enumerate().max_by_key(|(_, c)| **c).map(|(i, _)| i).unwrap();
        counts[i] -= 1;
        assigned -= 1;
    }
    counts
}

/// Partitions `d` into train/valid/test/unlabeled parts.
///
/// With `stratified`, every class is apportioned separately, so each part
/// holds its share of every class to within one row, and every class with at
/// least one row is represented in the training part.
pub fn split(d: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let p = spec.proportions.as_array();
    let mut rng = substream(spec.seed, "split");
    let mut parts: [Vec<usize>; 4] = Default::default();
    if spec.stratified {
        let labels = d.classes().map_err(|_| Error::invalid("stratified split needs class targets"))?;
        let mut by_class = vec![Vec::new(); d.num_classes()];
        for (i, &c) in labels.iter().enumerate() {
            by_class[c].push(i);
        }
        for mut rows in by_class {
            if rows.is_empty() {
                continue;
            }
            rows.shuffle(&mut rng);
            let mut counts = apportion(rows.len(), &p);
            if counts[0] == 0 {
                let donor = (1..4).max_by_key(|&i| counts[i]).unwrap();
                counts[donor] -= 1;
                counts[0] += 1;
            }
            let mut start = 0;
            for (part, &c) in parts.iter_mut().zip(&counts) {
                part.extend_from_slice(&rows[start..start + c]);
                start += c;
            }
        }
    } else {
        let mut rows: Vec<usize> = (0..d.n_rows()).collect();
        rows.shuffle(&mut rng);
        let counts = apportion(rows.len(), &p);
        let mut start = 0;
        for (part, &c) in parts.iter_mut().zip(&counts) {
            part.extend_from_slice(&rows[start..start + c]);
            start += c;
        }
    }
    const NAMES: [&str; 4] = ["train", "valid", "test", "unlabeled"];
    for (k, part) in parts.iter_mut().enumerate() {
        if p[k] > 0.0 && part.is_empty() {
            return Err(Error::invalid(format!(
                "{} proportion {} yields zero rows out of {}",
                NAMES[k],
                p[k],
                d.n_rows()
            )));
        }
        part.sort_unstable();
    }
    let [train, valid, test, unlabeled] = parts;
    Ok(Splits {
        train: d.select(&train),
        valid: d.select(&valid),
        test: d.select(&test),
        unlabeled: d.select(&unlabeled).strip_targets(),
    })
}

/// Labeled and label-stripped parts produced by [`strip_labels`].
#[derive(Clone, Debug)]
pub struct LabelSplit {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
}

/// Keeps targets on a random `labeled_fraction` of the rows and strips them
/// (into the hidden slot) from the rest.
pub fn strip_labels(d: &Dataset, labeled_fraction: f64, seed: u64) -> Result<LabelSplit> {
    if d.targets().is_none() {
        return Err(Error::invalid("strip_labels needs a labeled dataset"));
    }
    if !(labeled_fraction > 0.0 && labeled_fraction < 1.0) {
        return Err(Error::invalid("labeled fraction must lie in (0, 1)"));
    }
    let n = d.n_rows();
    let k = (n as f64 * labeled_fraction).round() as usize;
    if k == 0 {
        return Err(Error::invalid("labeled fraction yields zero labeled rows"));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut substream(seed, "strip_labels"));
    let (lab, unl) = rows.split_at_mut(k);
    lab.sort_unstable();
    unl.sort_unstable();
    Ok(LabelSplit {
        labeled: d.select(lab),
        unlabeled: d.select(unl).strip_targets(),
    })
}
