use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureKind, FeatureMeta};
use crate::error::{Error, Result};

/// Expands each categorical column into one indicator column per level.
///
/// Columns keep their original order; within a categorical block the levels
/// appear in lexicographic order. When the schema declared a level set, that
/// set defines the block and any observed level outside it is an error.
pub fn one_hot_encode(d: &Dataset) -> Result<Dataset> {
    if !d.meta().iter().any(FeatureMeta::is_categorical) {
        return Ok(d.clone());
    }
    // (source column, observed level code -> output column offset) per input column
    let mut plan: Vec<(usize, Option<Vec<usize>>)> = Vec::new();
    let mut meta = Vec::new();
    for (j, m) in d.meta().iter().enumerate() {
        match &m.kind {
            FeatureKind::Numeric => {
                plan.push((meta.len(), None));
                meta.push(m.clone());
            }
            FeatureKind::Categorical { levels, declared } => {
                let block: &[String] = declared.as_deref().unwrap_or(levels);
                let used = used_codes(d, j, levels.len());
                let mut offsets = vec![usize::MAX; levels.len()];
                for (code, level) in levels.iter().enumerate() {
                    match block.binary_search(level) {
                        Ok(pos) => offsets[code] = pos,
                        Err(_) if used[code] => {
                            return Err(Error::UnseenLevel {
                                column: m.name.clone(),
                                level: level.clone(),
                            })
                        }
                        Err(_) => {}
                    }
                }
                plan.push((meta.len(), Some(offsets)));
                meta.extend(block.iter().map(|l| FeatureMeta::numeric(format!("{}={}", m.name, l))));
            }
        }
    }
    let n = d.n_rows();
    let mut out = Array2::<f64>::zeros((n, meta.len()));
    for (j, (start, offsets)) in plan.iter().enumerate() {
        let col = d.features().column(j).to_owned();
        match offsets {
            None => out.column_mut(*start).assign(&col),
            Some(offsets) => {
                for (i, &code) in col.iter().enumerate() {
                    out[[i, start + offsets[code as usize]]] = 1.0;
                }
            }
        }
    }
    Ok(d.with_features(out, meta))
}

fn used_codes(d: &Dataset, column: usize, levels: usize) -> Vec<bool> {
    let mut used = vec![false; levels];
    for &v in d.features().column(column) {
        used[v as usize] = true;
    }
    used
}

/// Bounds recorded by [`min_max_scale`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// Affine map of `values` onto [0, 1].
pub fn min_max_scale(values: &[f64]) -> Result<(Vec<f64>, MinMax)> {
    if values.len() < 2 {
        return Err(Error::invalid("min-max scaling needs at least two values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("min-max scaling needs finite values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(Error::invalid("cannot min-max scale a constant vector"));
    }
    let mm = MinMax { min, max };
    // clamp guards the extremes against rounding just outside [0, 1]
    Ok((values.iter().map(|&v| mm.apply(v).clamp(0.0, 1.0)).collect(), mm))
}
