//! CART student tree.
//!
//! Splits are chosen greedily, top-down, to maximize the weighted decrease of
//! the summed per-output variance. On one-hot targets that criterion is
//! exactly the weighted Gini decrease, so hard-label classification, soft
//! probability targets, logit targets and scalar regression share one code
//! path. Every node stores the weighted mean of its training targets, which
//! makes [`StudentTree::truncate`] produce the tree that fitting with a
//! smaller depth limit would have grown.

mod export;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::distill::{SampleWeights, TargetKind, TargetSet};
use crate::error::{Error, Result};
use crate::teacher::{argmax, softmax_t};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Enforced on the floor of the weighted row count of each leaf.
    pub min_samples_leaf: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<usize>,
    pub depth: usize,
    pub split: Option<Split>,
    /// Weighted mean of the training targets that reached this node.
    pub value: Vec<f64>,
    pub n_samples: usize,
    pub weight_sum: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// A fitted binary tree. Nodes are stored in pre-order with the root at 0;
/// a row goes left when `x[feature] <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTree {
    pub nodes: Vec<Node>,
    pub params: TreeParams,
    pub target_kind: TargetKind,
    pub n_features: usize,
    pub n_outputs: usize,
}

/// Weight-sum floor used for the leaf-size rule; absorbs rounding in sums of
/// fractional weights.
fn weighted_count(w: f64) -> usize {
    (w + 1e-9).floor() as usize
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Builder<'x, 'y> {
    x: ArrayView2<'x, f64>,
    y: ArrayView2<'y, f64>,
    w: Vec<f64>,
    params: TreeParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_, '_> {
    fn stats(&self, rows: &[u32]) -> (f64, Vec<f64>, f64) {
        let k = self.y.ncols();
        let mut w_sum = 0.0;
        let mut s = vec![0.0; k];
        let mut ss = 0.0;
        for &r in rows {
            let r = r as usize;
            let w = self.w[r];
            w_sum += w;
            for (j, sj) in s.iter_mut().enumerate() {
                let v = self.y[[r, j]];
                *sj += w * v;
                ss += w * v * v;
            }
        }
        (w_sum, s, ss)
    }

    fn best_split(&self, sorted: &[Vec<u32>], w_total: f64, s_total: &[f64], ss_total: f64) -> Option<Candidate> {
        let k = s_total.len();
        let min_leaf = self.params.min_samples_leaf;
        let min_gain = 1e-12 * ss_total.abs().max(f64::MIN_POSITIVE);
        let mut best: Option<Candidate> = None;
        let mut sl = vec![0.0; k];
        for (f, rows) in sorted.iter().enumerate() {
            sl.iter_mut().for_each(|v| *v = 0.0);
            let mut wl = 0.0;
            for p in 0..rows.len() - 1 {
                let r = rows[p] as usize;
                let w = self.w[r];
                wl += w;
                for (j, v) in sl.iter_mut().enumerate() {
                    *v += w * self.y[[r, j]];
                }
                let a = self.x[[r, f]];
                let b = self.x[[rows[p + 1] as usize, f]];
                if b <= a {
                    continue;
                }
                let wr = w_total - wl;
                if weighted_count(wl) < min_leaf || weighted_count(wr) < min_leaf || wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                // WL*WR/W * |mean_L - mean_R|^2 summed over outputs
                let mut d2 = 0.0;
                for j in 0..k {
                    let d = sl[j] / wl - (s_total[j] - sl[j]) / wr;
                    d2 += d * d;
                }
                let gain = wl * wr / w_total * d2;
                if gain <= min_gain {
                    continue;
                }
                let improves = match &best {
                    None => true,
                    Some(c) => gain > c.gain * (1.0 + 1e-13),
                };
                if improves {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b || !threshold.is_finite() {
                        threshold = a;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, sorted: Vec<Vec<u32>>, depth: usize, parent: Option<usize>) -> usize {
        let rows = &sorted[0];
        let (w_total, s, ss) = self.stats(rows);
        let value: Vec<f64> = s.iter().map(|v| v / w_total).collect();
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent,
            depth,
            split: None,
            value,
            n_samples: rows.len(),
            weight_sum: w_total,
        });
        let min_leaf = self.params.min_samples_leaf;
        if depth >= self.params.max_depth || rows.len() < 2 || weighted_count(w_total) < 2 * min_leaf {
            return id;
        }
        let Some(best) = self.best_split(&sorted, w_total, &s, ss) else {
            return id;
        };
        for &r in &sorted[0] {
            self.goes_left[r as usize] = self.x[[r as usize, best.feature]] <= best.threshold;
        }
        let mut left = Vec::with_capacity(sorted.len());
        let mut right = Vec::with_capacity(sorted.len());
        for list in sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = list.into_iter().partition(|&r| self.goes_left[r as usize]);
            left.push(l);
            right.push(r);
        }
        let l = self.build(left, depth + 1, Some(id));
        let r = self.build(right, depth + 1, Some(id));
        self.nodes[id].split = Some(Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        });
        id
    }
}

impl StudentTree {
    /// Fits a tree to `targets` (one row per dataset row) with optional
    /// per-row weights.
    pub fn fit(d: &Dataset, targets: &TargetSet, weights: Option<&SampleWeights>, params: TreeParams) -> Result<Self> {
        Self::fit_matrix(d.features(), targets.values(), weights.map(SampleWeights::as_slice), targets.kind(), params)
    }

    /// Same as [`fit`](Self::fit) on raw matrices: `x` is `N × F`, `y` is
    /// `N × K`.
    pub fn fit_matrix(
        x: ArrayView2<'_, f64>,
        y: ArrayView2<'_, f64>,
        weights: Option<&[f64]>,
        target_kind: TargetKind,
        params: TreeParams,
    ) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::invalid("cannot fit a tree on an empty dataset"));
        }
        if y.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.nrows(),
            });
        }
        if y.ncols() == 0 {
            return Err(Error::invalid("targets have no columns"));
        }
        if params.max_depth == 0 || params.min_samples_leaf == 0 {
            return Err(Error::invalid("max_depth and min_samples_leaf must be at least 1"));
        }
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many rows"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("features and targets must be finite"));
        }
        let w = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: w.len(),
                    });
                }
                SampleWeights::new(w.to_vec())?.as_slice().to_vec()
            }
            None => vec![1.0; n],
        };
        let sorted: Vec<Vec<u32>> = (0..x.ncols())
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| x[[a as usize, f]].total_cmp(&x[[b as usize, f]]).then(a.cmp(&b)));
                idx
            })
            .collect();
        let sorted = if sorted.is_empty() { vec![(0..n as u32).collect()] } else { sorted };
        let mut builder = Builder {
            x,
            y,
            w,
            params,
            nodes: Vec::new(),
            goes_left: vec![false; n],
        };
        if x.ncols() == 0 {
            // no features: a single leaf
            builder.params.max_depth = 0;
        }
        builder.build(sorted, 0, None);
        Ok(StudentTree {
            nodes: builder.nodes,
            params,
            target_kind,
            n_features: x.ncols(),
            n_outputs: y.ncols(),
        })
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    fn leaf_index(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
        i
    }

    fn check_width(&self, got: usize) -> Result<()> {
        if got != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got,
            });
        }
        Ok(())
    }

    /// Raw leaf value reached by `x`.
    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<&[f64]> {
        self.check_width(x.len())?;
        Ok(&self.nodes[self.leaf_index(x)].value)
    }

    /// Class probabilities: the leaf value for probability targets, its
    /// softmax for logit targets.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let v = self.predict(x)?;
        match self.target_kind {
            TargetKind::Logits => Ok(softmax_t(ArrayView1::from(v), 1.0)?.to_vec()),
            TargetKind::Continuous => Err(Error::WrongTask {
                expected: "class",
            }),
            TargetKind::Hard | TargetKind::Soft => Ok(v.to_vec()),
        }
    }

    /// Argmax of the leaf value, ties to the lowest class index.
    pub fn predict_class(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        if self.target_kind == TargetKind::Continuous {
            return Err(Error::WrongTask {
                expected: "class",
            });
        }
        Ok(argmax(ArrayView1::from(self.predict(x)?)))
    }

    pub fn predict_classes(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        x.rows().into_iter().map(|r| self.predict_class(r)).collect()
    }

    /// First output of every row; for scalar regression trees.
    pub fn predict_values(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        x.rows().into_iter().map(|r| self.predict(r).map(|v| v[0])).collect()
    }

    /// Leaf reached by each row, numbering leaves 0.. in pre-order.
    pub fn leaf_assignments(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        self.check_width(x.ncols())?;
        let mut ordinal = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.is_leaf() {
                ordinal[i] = next;
                next += 1;
            }
        }
        Ok(x.rows().into_iter().map(|r| ordinal[self.leaf_index(r)]).collect())
    }

    /// The tree cut at `max_depth`: nodes at that depth become leaves.
    pub fn truncate(&self, max_depth: usize) -> StudentTree {
        let mut nodes = Vec::new();
        self.copy_subtree(0, None, max_depth, &mut nodes);
        StudentTree {
            nodes,
            params: TreeParams {
                max_depth,
                ..self.params
            },
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> StudentTree {
        StudentTree {
            nodes: Vec::new(),
            params: self.params,
            target_kind: self.target_kind,
            n_features: self.n_features,
            n_outputs: self.n_outputs,
        }
    }

    fn copy_subtree(&self, i: usize, parent: Option<usize>, max_depth: usize, out: &mut Vec<Node>) -> usize {
        let src = &self.nodes[i];
        let id = out.len();
        out.push(Node {
            parent,
            split: None,
            ..src.clone()
        });
        if let Some(s) = src.split {
            if src.depth < max_depth {
                let l = self.copy_subtree(s.left, Some(id), max_depth, out);
                let r = self.copy_subtree(s.right, Some(id), max_depth, out);
                out[id].split = Some(Split { left: l, right: r, ..s });
            }
        }
        id
    }

    /// `Σ_i w_i ‖y_i − predict(x_i)‖²`.
    pub fn weighted_loss(&self, x: ArrayView2<'_, f64>, y: ArrayView2<'_, f64>, w: Option<&[f64]>) -> Result<f64> {
        self.check_width(x.ncols())?;
        let mut total = 0.0;
        for (i, row) in x.rows().into_iter().enumerate() {
            let v = &self.nodes[self.leaf_index(row)].value;
            let wi = w.map_or(1.0, |w| w[i]);
            total += wi * y.row(i).iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn params(max_depth: usize, min_samples_leaf: usize) -> TreeParams {
        TreeParams {
            max_depth,
            min_samples_leaf,
        }
    }

    fn step_tree() -> StudentTree {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![[0.0], [0.0], [1.0], [1.0]];
        StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Continuous, params(1, 1)).unwrap()
    }

    #[test]
    fn perfectly_separable_step() {
        let t = step_tree();
        let s = t.nodes[0].split.unwrap();
        assert!(s.threshold >= 2.0 && s.threshold < 3.0);
        assert_eq!(t.predict(array![1.5].view()).unwrap(), &[0.0]);
        assert_eq!(t.predict(array![3.5].view()).unwrap(), &[1.0]);
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![[0.0], [0.0], [1.0], [1.0]];
        assert_eq!(t.weighted_loss(x.view(), y.view(), None).unwrap(), 0.0);
        assert_eq!(t.leaf_assignments(array![[1.5], [3.5]].view()).unwrap(), vec![0, 1]);
        assert!(t.predict(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let x = array![[1.0, 5.0], [2.0, 4.0], [3.0, 3.0]];
        let y = array![[0.7], [0.7], [0.7]];
        let t = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Continuous, params(5, 1)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.depth(), 0);
        assert!((t.nodes[0].value[0] - 0.7).abs() < 1e-12);
        assert_eq!(t.leaf_assignments(x.view()).unwrap(), vec![0, 0, 0]);
        assert_eq!(t.predict(array![100.0, -3.0].view()).unwrap(), t.nodes[0].value.as_slice());
    }

    #[test]
    fn argmax_and_ties() {
        let leaf = |v: Vec<f64>, kind| StudentTree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                split: None,
                n_samples: 1,
                weight_sum: 1.0,
                value: v,
            }],
            params: params(1, 1),
            target_kind: kind,
            n_features: 1,
            n_outputs: 2,
        };
        let x = array![0.0];
        assert_eq!(leaf(vec![0.2, 0.5, 0.3], TargetKind::Soft).predict_class(x.view()).unwrap(), 1);
        assert_eq!(leaf(vec![0.5, 0.5], TargetKind::Soft).predict_class(x.view()).unwrap(), 0);
        assert_eq!(leaf(vec![3.0, -1.0], TargetKind::Logits).predict_class(x.view()).unwrap(), 0);
        let p = leaf(vec![3.0, -1.0], TargetKind::Logits).predict_proba(x.view()).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(leaf(vec![1.0], TargetKind::Continuous).predict_class(x.view()).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Array2::<f64>::zeros((0, 2));
        let y = Array2::<f64>::zeros((0, 1));
        assert!(StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Continuous, params(2, 1)).is_err());
        let x = array![[1.0], [2.0]];
        let y = array![[1.0], [2.0]];
        assert!(StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Continuous, params(0, 1)).is_err());
        assert!(StudentTree::fit_matrix(x.view(), y.view(), Some(&[0.0, 0.0]), TargetKind::Continuous, params(1, 1)).is_err());
        assert!(StudentTree::fit_matrix(x.view(), y.view(), Some(&[1.0]), TargetKind::Continuous, params(1, 1)).is_err());
    }

    #[test]
    fn min_leaf_is_weighted() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = array![[0.0], [0.0], [1.0], [1.0]];
        // total weight 3.6 floors to 3, too little for two leaves of 2
        let w = [0.9; 4];
        let t = StudentTree::fit_matrix(x.view(), y.view(), Some(&w), TargetKind::Continuous, params(3, 2)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        let w = [1.0, 1.0, 1.0, 1.0];
        let t = StudentTree::fit_matrix(x.view(), y.view(), Some(&w), TargetKind::Continuous, params(3, 2)).unwrap();
        assert_eq!(t.nodes.len(), 3);
    }

    fn random_instance(seed: u64, n: usize) -> (Array2<f64>, Array2<f64>) {
        use rand::Rng;
        let mut rng = crate::rng::substream(seed, "tree-test");
        let x = Array2::from_shape_fn((n, 3), |_| f64::from(rng.gen_range(0..6)));
        let y = Array2::from_shape_fn((n, 2), |_| rng.gen_range(-1.0..1.0));
        (x, y)
    }

    proptest! {
        #[test]
        fn structural_invariants(seed in 0u64..500, depth in 1usize..6, min_leaf in 1usize..6) {
            let (x, y) = random_instance(seed, 60);
            let t = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Soft, params(depth, min_leaf)).unwrap();
            let leaves = t.leaf_assignments(x.view()).unwrap();
            let mut members = vec![Vec::new(); t.n_leaves()];
            for (i, &l) in leaves.iter().enumerate() {
                members[l].push(i);
            }
            let leaf_nodes: Vec<&Node> = t.nodes.iter().filter(|n| n.is_leaf()).collect();
            for (node, rows) in leaf_nodes.iter().zip(&members) {
                prop_assert!(node.depth <= depth);
                prop_assert!(rows.len() >= min_leaf);
                prop_assert_eq!(rows.len(), node.n_samples);
                for j in 0..2 {
                    let mean = rows.iter().map(|&i| y[[i, j]]).sum::<f64>() / rows.len() as f64;
                    prop_assert!((mean - node.value[j]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn truncation_equals_refit(seed in 0u64..500, depth in 1usize..7) {
            let (x, y) = random_instance(seed, 80);
            let deep = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Soft, params(8, 2)).unwrap();
            let direct = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Soft, params(depth, 2)).unwrap();
            prop_assert_eq!(deep.truncate(depth), direct);
        }

        // with c >= 1 and min_samples_leaf 1 the leaf-size rule never binds
        #[test]
        fn uniform_weight_scaling_is_invisible(seed in 0u64..500, c in 1.0f64..8.0) {
            let (x, y) = random_instance(seed, 50);
            let base = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Soft, params(4, 1)).unwrap();
            let w = vec![c; 50];
            let scaled = StudentTree::fit_matrix(x.view(), y.view(), Some(&w), TargetKind::Soft, params(4, 1)).unwrap();
            prop_assert_eq!(base.nodes.len(), scaled.nodes.len());
            for (a, b) in base.nodes.iter().zip(&scaled.nodes) {
                prop_assert_eq!(a.split.map(|s| (s.feature, s.threshold)), b.split.map(|s| (s.feature, s.threshold)));
                for (u, v) in a.value.iter().zip(&b.value) {
                    prop_assert!((u - v).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn loss_non_increasing_in_depth(seed in 0u64..500) {
            let (x, y) = random_instance(seed, 70);
            let mut prev = f64::INFINITY;
            for depth in 1..7 {
                let t = StudentTree::fit_matrix(x.view(), y.view(), None, TargetKind::Soft, params(depth, 3)).unwrap();
                let loss = t.weighted_loss(x.view(), y.view(), None).unwrap();
                prop_assert!(loss <= prev + 1e-12);
                prev = loss;
            }
        }
    }
}
