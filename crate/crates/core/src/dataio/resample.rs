use rand::seq::index;
use rand::Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::substream;

struct Binary {
    minority: usize,
    minority_rows: Vec<usize>,
    majority_rows: Vec<usize>,
}

fn binary_classes(d: &Dataset, target_ratio: f64) -> Result<Binary> {
    let labels = d.classes().map_err(|_| Error::WrongTask {
        expected: "binary class",
    })?;
    if d.num_classes() != 2 {
        return Err(Error::WrongTask {
            expected: "binary class",
        });
    }
    if !(target_ratio > 0.0 && target_ratio < 1.0) {
        return Err(Error::invalid("minority ratio must lie in (0, 1)"));
    }
    let counts = d.class_counts();
    let minority = if counts[1] <= counts[0] { 1 } else { 0 };
    let (minority_rows, majority_rows) = (0..labels.len()).partition(|&i| labels[i] == minority);
    let b = Binary {
        minority,
        minority_rows,
        majority_rows,
    };
    if b.minority_rows.is_empty() {
        return Err(Error::invalid("no minority rows to resample"));
    }
    let current = b.minority_rows.len() as f64 / labels.len() as f64;
    if current >= target_ratio {
        return Err(Error::invalid(format!(
            "minority ratio {current} already at or above target {target_ratio}"
        )));
    }
    Ok(b)
}

/// Drops majority rows uniformly at random until the minority class makes up
/// at least `minority_ratio` of the rows. Minority rows are all kept and the
/// surviving rows stay in their original order.
pub fn undersample(d: &Dataset, minority_ratio: f64, seed: u64) -> Result<Dataset> {
    let b = binary_classes(d, minority_ratio)?;
    let p = b.minority_rows.len() as f64;
    // largest m with p / (p + m) >= r
    let keep = ((p * (1.0 - minority_ratio) / minority_ratio) + 1e-9).floor() as usize;
    let keep = keep.min(b.majority_rows.len());
    let mut rng = substream(seed, "undersample");
    let chosen = index::sample(&mut rng, b.majority_rows.len(), keep);
    let mut rows: Vec<usize> = chosen.iter().map(|k| b.majority_rows[k]).collect();
    rows.extend_from_slice(&b.minority_rows);
    rows.sort_unstable();
    log::debug!("undersample: kept {keep} majority rows around class {}", b.minority);
    Ok(d.select(&rows))
}

/// Appends minority rows drawn with replacement until the minority class
/// makes up at least `minority_ratio` of the rows.
pub fn oversample(d: &Dataset, minority_ratio: f64, seed: u64) -> Result<Dataset> {
    let b = binary_classes(d, minority_ratio)?;
    let m = b.majority_rows.len() as f64;
    let p = b.minority_rows.len();
    // smallest total q with q / (m + q) >= r
    let mut total = (minority_ratio * m / (1.0 - minority_ratio) - 1e-9).ceil().max(p as f64) as usize;
    while (total as f64) / (m + total as f64) < minority_ratio {
        total += 1;
    }
    let mut rng = substream(seed, "oversample");
    let mut rows: Vec<usize> = (0..d.n_rows()).collect();
    rows.extend((p..total).map(|_| b.minority_rows[rng.gen_range(0..p)]));
    Ok(d.select(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::Targets;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn imbalanced(n: usize, positives: usize) -> Dataset {
        let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let y = (0..n).map(|i| usize::from(i % (n / positives.max(1)) == 0 && i / (n / positives.max(1)) < positives)).collect();
        Dataset::from_matrix(x, Some(Targets::Classes(y)), 2).unwrap()
    }

    #[test]
    fn undersample_to_two_percent() {
        let d = imbalanced(1000, 10);
        assert_eq!(d.class_counts(), vec![990, 10]);
        let u = undersample(&d, 0.02, 1).unwrap();
        assert_eq!(u.class_counts(), vec![490, 10]);
        assert_eq!(u.n_rows(), 500);
        let again = undersample(&d, 0.02, 1).unwrap();
        assert_eq!(u.row_ids(), again.row_ids());
    }

    #[test]
    fn undersample_already_balanced_errors() {
        let x = Array2::zeros((18, 1));
        let y = (0..18).map(|i| i % 2).collect();
        let d = Dataset::from_matrix(x, Some(Targets::Classes(y)), 2).unwrap();
        assert!(undersample(&d, 0.5, 0).is_err());
    }

    #[test]
    fn oversample_smallest_sufficient_count() {
        let d = imbalanced(1000, 1);
        let o = oversample(&d, 0.002, 4).unwrap();
        // 2/1001 < 0.002 <= 3/1002
        assert_eq!(o.class_counts(), vec![999, 3]);
        assert_eq!(o.row_ids(), oversample(&d, 0.002, 4).unwrap().row_ids());
    }

    #[test]
    fn oversample_rejects_regression() {
        let d = Dataset::from_matrix(Array2::zeros((4, 1)), Some(Targets::Continuous(vec![0.0; 4])), 0).unwrap();
        assert!(matches!(oversample(&d, 0.1, 0), Err(Error::WrongTask { .. })));
    }

    proptest! {
        #[test]
        fn resampling_preserves_rows(pos in 1usize..20, n in 200usize..600, ratio in 0.1f64..0.4, seed: u64) {
            let d = imbalanced(n, pos);
            let minority_ids: Vec<usize> = d.classes().unwrap().iter().enumerate().filter(|(_, &c)| c == 1).map(|(i, _)| i).collect();
            let u = undersample(&d, ratio, seed).unwrap();
            let counts = u.class_counts();
            prop_assert!(counts[1] as f64 / u.n_rows() as f64 >= ratio - 1e-12);
            // within one row: keeping one more majority row would undershoot
            prop_assert!((counts[1] as f64) / (u.n_rows() as f64 + 1.0) < ratio);
            for id in &minority_ids {
                prop_assert!(u.row_ids().contains(id));
            }
            let o = oversample(&d, ratio, seed).unwrap();
            let oc = o.class_counts();
            prop_assert!(oc[1] as f64 / o.n_rows() as f64 >= ratio);
            for out in [&u, &o] {
                for (i, &id) in out.row_ids().iter().enumerate() {
                    prop_assert_eq!(out.row(i), d.row(id));
                }
            }
        }
    }
}
