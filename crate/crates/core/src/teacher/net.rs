use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    Classifier { classes: usize },
    Regressor,
}

impl OutputKind {
    pub fn width(&self) -> usize {
        match self {
            OutputKind::Classifier { classes } => *classes,
            OutputKind::Regressor => 1,
        }
    }
}

/// One dense layer: `activation(W x + b)` followed by dropout at train time.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    /// Drop probability; survivors are scaled by `1 / (1 - rate)`.
    pub dropout: f64,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Per-feature affine standardization applied before the first layer.
#[derive(Clone, Debug, PartialEq)]
pub struct InputScaler {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl InputScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            scale: Array1::ones(dim),
        }
    }

    /// Mean and standard deviation of each column; constant columns get
    /// scale 1.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { s } else { 1.0 });
        Self { mean, scale }
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

/// Layer sizes and dropout rates of the hidden part of a network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    /// One rate per hidden layer; empty means no dropout.
    #[serde(default)]
    pub dropout: Vec<f64>,
    pub output: OutputKind,
}

/// Multilayer perceptron teacher. The last layer is linear and produces the
/// logits (classification) or the prediction (regression).
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherNet {
    pub layers: Vec<Layer>,
    pub output: OutputKind,
    pub scaler: InputScaler,
}

/// Activations recorded by a forward pass over a batch.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Scaled network input.
    pub input: Array2<f64>,
    /// Post-activation, post-dropout output of every hidden layer.
    pub hidden: Vec<Array2<f64>>,
    /// Dropout masks (already scaled), one per hidden layer, if active.
    pub masks: Vec<Option<Array2<f64>>>,
    pub logits: Array2<f64>,
}

impl TeacherNet {
    /// Random network with He-uniform weights (bound `sqrt(6 / fan_in)`) on
    /// relu layers, Glorot-uniform on the output layer and zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        if arch.input == 0 {
            return Err(Error::invalid("network input width must be positive"));
        }
        if arch.hidden.contains(&0) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        if arch.output.width() == 0 {
            return Err(Error::invalid("classifier needs at least one class"));
        }
        if !arch.dropout.is_empty() && arch.dropout.len() != arch.hidden.len() {
            return Err(Error::DimensionMismatch {
                expected: arch.hidden.len(),
                got: arch.dropout.len(),
            });
        }
        if arch.dropout.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::invalid("dropout rates must lie in [0, 1)"));
        }
        let mut rng = substream(seed, "teacher-init");
        let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
        let mut fan_in = arch.input;
        let widths = arch.hidden.iter().copied().chain(std::iter::once(arch.output.width()));
        for (l, out) in widths.enumerate() {
            let hidden = l < arch.hidden.len();
            let bound = if hidden {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + out) as f64).sqrt()
            };
            let weights = Array2::from_shape_fn((out, fan_in), |_| rng.gen_range(-bound..bound));
            layers.push(Layer {
                weights,
                bias: Array1::zeros(out),
                activation: if hidden { Activation::Relu } else { Activation::Identity },
                dropout: if hidden { arch.dropout.get(l).copied().unwrap_or(0.0) } else { 0.0 },
            });
            fan_in = out;
        }
        Ok(Self {
            layers,
            output: arch.output,
            scaler: InputScaler::identity(arch.input),
        })
    }

    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>, output: OutputKind, scaler: InputScaler) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::invalid("empty architecture"));
        };
        if scaler.mean.len() != first.in_dim() || scaler.scale.len() != first.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: first.in_dim(),
                got: scaler.mean.len(),
            });
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].out_dim(),
                    got: pair[1].in_dim(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch {
                    expected: l.out_dim(),
                    got: l.bias.len(),
                });
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::invalid("dropout rates must lie in [0, 1)"));
            }
        }
        let last = layers.last().unwrap();
        if last.out_dim() != output.width() {
            return Err(Error::DimensionMismatch {
                expected: output.width(),
                got: last.out_dim(),
            });
        }
        Ok(Self { layers, output, scaler })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.output, OutputKind::Classifier { .. })
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch. Dropout is applied only when `rng` is
    /// given; without it the pass is deterministic (evaluation mode).
    pub fn forward_batch<R: Rng>(&self, x: ArrayView2<'_, f64>, mut rng: Option<&mut R>) -> Result<ForwardPass> {
        self.check_input(x)?;
        let input = self.scaler.apply(x);
        let mut hidden = Vec::with_capacity(self.num_hidden());
        let mut masks = Vec::with_capacity(self.num_hidden());
        let mut current = input.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = current.dot(&layer.weights.t()) + &layer.bias;
            if layer.activation == Activation::Relu {
                z.mapv_inplace(|v| v.max(0.0));
            }
            if l + 1 == self.layers.len() {
                return Ok(ForwardPass {
                    input,
                    hidden,
                    masks,
                    logits: z,
                });
            }
            let mask = match rng.as_deref_mut() {
                Some(r) if layer.dropout > 0.0 => {
                    let keep = 1.0 - layer.dropout;
                    let m = Array2::from_shape_fn(z.raw_dim(), |_| if r.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                    z *= &m;
                    Some(m)
                }
                _ => None,
            };
            masks.push(mask);
            hidden.push(z.clone());
            current = z;
        }
        unreachable!("network has at least one layer")
    }

    /// Single-sample forward pass: hidden activations and the logits.
    pub fn forward(&self, x: ArrayView1<'_, f64>, train_mode: bool, seed: u64) -> Result<(Vec<Array1<f64>>, Array1<f64>)> {
        let batch = x.insert_axis(Axis(0));
        let pass = if train_mode {
            let mut rng = substream(seed, "dropout");
            self.forward_batch(batch, Some(&mut rng))?
        } else {
            self.forward_batch::<rand_chacha::ChaCha8Rng>(batch, None)?
        };
        let hidden = pass.hidden.into_iter().map(|h| h.row(0).to_owned()).collect();
        Ok((hidden, pass.logits.row(0).to_owned()))
    }

    /// Logits for every row (evaluation mode). Rows are processed in chunks
    /// in parallel; each row's result does not depend on the chunking.
    pub fn predict_logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        use rayon::prelude::*;
        self.check_input(x)?;
        const CHUNK: usize = 2048;
        let chunks: Vec<Array2<f64>> = (0..x.nrows().div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let rows = x.slice(ndarray::s![c * CHUNK..((c + 1) * CHUNK).min(x.nrows()), ..]);
                self.eval_rows(rows)
            })
            .collect();
        if chunks.is_empty() {
            return Ok(Array2::zeros((0, self.output.width())));
        }
        let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
        Ok(ndarray::concatenate(Axis(0), &views).expect("chunks share width"))
    }

    fn eval_rows(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        // Row-at-a-time matrix-vector products keep each row's arithmetic
        // identical regardless of how rows are batched.
        let mut out = Array2::zeros((x.nrows(), self.output.width()));
        for (i, row) in x.rows().into_iter().enumerate() {
            let mut h = (&row - &self.scaler.mean) / &self.scaler.scale;
            for layer in &self.layers {
                let mut z = layer.weights.dot(&h) + &layer.bias;
                if layer.activation == Activation::Relu {
                    z.mapv_inplace(|v| v.max(0.0));
                }
                h = z;
            }
            out.row_mut(i).assign(&h);
        }
        out
    }

    /// Evaluation-mode activations of hidden layer `layer` for every row.
    pub fn hidden_activations(&self, x: ArrayView2<'_, f64>, layer: usize) -> Result<Array2<f64>> {
        if layer >= self.num_hidden() {
            return Err(Error::invalid(format!("no hidden layer {layer}")));
        }
        self.check_input(x)?;
        let mut h = self.scaler.apply(x);
        for l in &self.layers[..=layer] {
            h = h.dot(&l.weights.t()) + &l.bias;
            if l.activation == Activation::Relu {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    /// Row-stochastic class probabilities at temperature `t`.
    pub fn predict_proba(&self, x: ArrayView2<'_, f64>, t: f64) -> Result<Array2<f64>> {
        if !self.is_classifier() {
            return Err(Error::WrongTask {
                expected: "classification",
            });
        }
        let mut z = self.predict_logits(x)?;
        for mut row in z.rows_mut() {
            let p = softmax_t(row.view(), t)?;
            row.assign(&p);
        }
        Ok(z)
    }

    /// Argmax class (ties to the lowest index) for classifiers.
    pub fn predict_class(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        if !self.is_classifier() {
            return Err(Error::WrongTask {
                expected: "classification",
            });
        }
        Ok(self.predict_logits(x)?.rows().into_iter().map(argmax).collect())
    }

    /// Scalar predictions of a regressor.
    pub fn predict_value(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if self.is_classifier() {
            return Err(Error::WrongTask {
                expected: "regression",
            });
        }
        Ok(self.predict_logits(x)?.column(0).to_vec())
    }

    /// Short content hash identifying these exact weights.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.scaler.mean.iter().chain(self.scaler.scale.iter()) {
            h.update(v.to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..8])
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Softmax of `z / t`, shifted by the maximum for stability.
pub fn softmax_t(z: ArrayView1<'_, f64>, t: f64) -> Result<Array1<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("temperature must be positive"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("logits must be finite"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = z.mapv(|v| ((v - max) / t).exp());
    let s = e.sum();
    e /= s;
    Ok(e)
}
