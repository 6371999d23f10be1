use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `num / den` with `den > 0`.
#[derive(Clone, Copy, Debug)]
pub struct Q {
    pub num: i128,
    pub den: i128,
}

impl Q {
    pub fn cmp(self, o: Q) -> std::cmp::Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

pub struct Instance {
    pub x: Vec<Vec<i64>>,
    pub y: Vec<Vec<i64>>,
    pub w: Vec<i64>,
}

/// `Σ_k S_k² / W` over the given rows, as an exact fraction.
pub fn score(inst: &Instance, rows: &[usize]) -> Q {
    let w: i128 = rows.iter().map(|&i| inst.w[i] as i128).sum();
    let k = inst.y[0].len();
    let mut num = 0;
    for j in 0..k {
        let s: i128 = rows.iter().map(|&i| (inst.w[i] * inst.y[i][j]) as i128).sum();
        num += s * s;
    }
    Q { num, den: w }
}

pub fn add(a: Q, b: Q) -> Q {
    Q {
        num: a.num * b.den + b.num * a.den,
        den: a.den * b.den,
    }
}

/// Weighted squared error of a leaf: `Σ w y² − Σ_k S_k² / W`.
pub fn leaf_loss(inst: &Instance, rows: &[usize]) -> Q {
    let ss: i128 = rows
        .iter()
        .map(|&i| inst.y[i].iter().map(|&v| (inst.w[i] * v * v) as i128).sum::<i128>())
        .sum();
    let s = score(inst, rows);
    Q {
        num: ss * s.den - s.num,
        den: s.den,
    }
}

/// Greedy recursive search over every feature and every midpoint between
/// consecutive distinct values; ties go to the lowest feature, then the
/// lowest threshold. Returns the leaves as row sets in pre-order.
pub fn oracle(inst: &Instance, rows: Vec<usize>, depth: usize, max_depth: usize, min_leaf: i64, leaves: &mut Vec<Vec<usize>>) {
    let weight = |r: &[usize]| r.iter().map(|&i| inst.w[i]).sum::<i64>();
    if depth == max_depth {
        leaves.push(rows);
        return;
    }
    let parent = score(inst, &rows);
    let mut best: Option<(Q, Vec<usize>, Vec<usize>)> = None;
    for f in 0..inst.x[0].len() {
        let mut values: Vec<i64> = rows.iter().map(|&i| inst.x[i][f]).collect();
        values.sort_unstable();
        values.dedup();
        for pair in values.windows(2) {
            // doubled coordinates keep the midpoint integral
            let t2 = pair[0] + pair[1];
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| 2 * inst.x[i][f] <= t2);
            if weight(&l) < min_leaf || weight(&r) < min_leaf {
                continue;
            }
            let s = add(score(inst, &l), score(inst, &r));
            let gain = Q {
                num: s.num * parent.den - parent.num * s.den,
                den: s.den * parent.den,
            };
            if gain.num <= 0 {
                continue;
            }
            if best.as_ref().is_none_or(|(g, _, _)| gain.cmp(*g).is_gt()) {
                best = Some((gain, l, r));
            }
        }
    }
    match best {
        Some((_, l, r)) => {
            oracle(inst, l, depth + 1, max_depth, min_leaf, leaves);
            oracle(inst, r, depth + 1, max_depth, min_leaf, leaves);
        }
        None => leaves.push(rows),
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(2..=200);
    let f = rng.gen_range(1..=4);
    let k = rng.gen_range(1..=2);
    let distinct = rng.gen_range(2..=12);
    let x = (0..n).map(|_| (0..f).map(|_| rng.gen_range(0..distinct)).collect()).collect();
    let y = (0..n).map(|_| (0..k).map(|_| rng.gen_range(0..=3)).collect()).collect();
    let w = (0..n).map(|_| rng.gen_range(1..=3)).collect();
    Instance { x, y, w }
}

pub fn matrices(inst: &Instance) -> (Array2<f64>, Array2<f64>, Vec<f64>) {
    let n = inst.x.len();
    let x = Array2::from_shape_fn((n, inst.x[0].len()), |(i, j)| inst.x[i][j] as f64);
    let y = Array2::from_shape_fn((n, inst.y[0].len()), |(i, j)| inst.y[i][j] as f64);
    let w = inst.w.iter().map(|&v| v as f64).collect();
    (x, y, w)
}
