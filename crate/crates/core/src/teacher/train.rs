use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{argmax, OutputKind, TeacherNet};
use crate::dataio::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
}

/// Mini-batch Adam settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop once validation loss has not improved for `patience` epochs and
    /// restore the best weights. Ignored without a validation set.
    pub early_stop: Option<EarlyStop>,
    /// Fit the network's input standardization on the training rows.
    pub standardize: bool,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            early_stop: Some(EarlyStop { patience: 10 }),
            standardize: true,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Validation loss, when a validation set was given.
    pub valid_loss: Option<f64>,
    /// Validation accuracy (classification) or MSE (regression).
    pub valid_metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainingLog {
    /// CSV with columns `epoch,train_loss,valid_loss,valid_metric`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,valid_metric\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, opt(e.valid_loss), opt(e.valid_metric)));
        }
        out
    }
}

/// Supervision for a batch: class ids or real values.
#[derive(Clone, Copy, Debug)]
pub enum Supervision<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

impl<'a> Supervision<'a> {
    fn of(net: &TeacherNet, d: &'a Dataset) -> Result<Self> {
        match (net.output, d.targets()) {
            (OutputKind::Classifier { classes }, Some(Targets::Classes(c))) => {
                if d.num_classes() > classes {
                    return Err(Error::invalid("dataset has more classes than the network"));
                }
                Ok(Supervision::Classes(c))
            }
            (OutputKind::Regressor, Some(Targets::Continuous(v))) => Ok(Supervision::Values(v)),
            (OutputKind::Classifier { .. }, _) => Err(Error::WrongTask {
                expected: "class",
            }),
            (OutputKind::Regressor, _) => Err(Error::WrongTask {
                expected: "continuous",
            }),
        }
    }

    fn len(&self) -> usize {
        match self {
            Supervision::Classes(c) => c.len(),
            Supervision::Values(v) => v.len(),
        }
    }

    fn subset(&self, idx: &[usize]) -> OwnedSupervision {
        match self {
            Supervision::Classes(c) => OwnedSupervision::Classes(idx.iter().map(|&i| c[i]).collect()),
            Supervision::Values(v) => OwnedSupervision::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

enum OwnedSupervision {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl OwnedSupervision {
    fn view(&self) -> Supervision<'_> {
        match self {
            OwnedSupervision::Classes(c) => Supervision::Classes(c),
            OwnedSupervision::Values(v) => Supervision::Values(v),
        }
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

/// Mean loss over rows given their output-layer values: softmax
/// cross-entropy for classes, squared error for values.
fn loss_and_delta(logits: &Array2<f64>, y: Supervision<'_>) -> (f64, Array2<f64>) {
    let b = logits.nrows() as f64;
    let mut delta = logits.clone();
    let mut loss = 0.0;
    match y {
        Supervision::Classes(c) => {
            for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let s = row.sum();
                row /= s;
                loss -= row[c[i]].max(PROB_FLOOR).ln();
                row[c[i]] -= 1.0;
            }
            delta /= b;
        }
        Supervision::Values(v) => {
            for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
                let r = row[0] - v[i];
                loss += r * r;
                row[0] = 2.0 * r;
            }
            delta /= b;
        }
    }
    (loss / b, delta)
}

impl TeacherNet {
    /// Mean loss on `x` in evaluation mode.
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: Supervision<'_>) -> Result<f64> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let logits = self.predict_logits(x)?;
        Ok(loss_and_delta(&logits, y).0)
    }

    /// Loss and its gradient with respect to every weight and bias.
    /// Dropout is sampled from `rng` when given.
    pub fn gradients<R: rand::Rng>(
        &self,
        x: ArrayView2<'_, f64>,
        y: Supervision<'_>,
        rng: Option<&mut R>,
    ) -> Result<(f64, Gradients)> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let pass = self.forward_batch(x, rng)?;
        let (loss, mut delta) = loss_and_delta(&pass.logits, y);
        let n_layers = self.layers.len();
        let mut gw = Vec::with_capacity(n_layers);
        let mut gb = Vec::with_capacity(n_layers);
        for l in (0..n_layers).rev() {
            let input = if l == 0 { &pass.input } else { &pass.hidden[l - 1] };
            gw.push(delta.t().dot(input));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].weights);
                let h = &pass.hidden[l - 1];
                upstream.zip_mut_with(h, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                if let Some(mask) = &pass.masks[l - 1] {
                    upstream *= mask;
                }
                delta = upstream;
            }
        }
        gw.reverse();
        gb.reverse();
        Ok((loss, Gradients { weights: gw, bias: gb }))
    }

    /// Flattened parameter vector (weights row-major, then bias, per layer).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied().collect::<Vec<_>>())
            .collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *v = p[k];
                k += 1;
            }
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

fn validation_metric(net: &TeacherNet, x: ArrayView2<'_, f64>, y: Supervision<'_>) -> Result<(f64, f64)> {
    let logits = net.predict_logits(x)?;
    let (loss, _) = loss_and_delta(&logits, y);
    let metric = match y {
        Supervision::Classes(c) => {
            let hits = logits.rows().into_iter().zip(c).filter(|(r, &c)| argmax(r.view()) == c).count();
            hits as f64 / c.len().max(1) as f64
        }
        Supervision::Values(v) => {
            logits.column(0).iter().zip(v).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / v.len().max(1) as f64
        }
    };
    Ok((loss, metric))
}

/// Trains `net` on `train` with mini-batch Adam, optionally early-stopping on
/// validation loss. Training is single-threaded and bitwise reproducible for
/// a given spec.
pub fn train(mut net: TeacherNet, train: &Dataset, valid: Option<&Dataset>, spec: &TrainSpec) -> Result<(TeacherNet, TrainingLog)> {
    spec.validate()?;
    let y = Supervision::of(&net, train)?;
    if train.n_rows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if spec.standardize {
        net.scaler = super::net::InputScaler::fit(train.features());
    }
    let valid = match valid {
        Some(v) if v.n_rows() > 0 => Some((v, Supervision::of(&net, v)?)),
        _ => None,
    };
    let x = train.features();
    let mut params = net.parameters();
    let mut adam = Adam::new(params.len(), spec.learning_rate);
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut shuffle_rng = substream(spec.seed, "teacher-shuffle");
    let mut dropout_rng = substream(spec.seed, "teacher-dropout");
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=spec.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(spec.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.subset(batch);
            let (loss, grads) = net.gradients(xb.view(), yb.view(), Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite { epoch, what: "loss" });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut params, &grads.flatten());
            net.set_parameters(&params);
        }
        if !net.all_finite() {
            return Err(Error::NonFinite { epoch, what: "weights" });
        }
        let train_loss = total / train.n_rows() as f64;
        let mut record = EpochRecord {
            epoch,
            train_loss,
            valid_loss: None,
            valid_metric: None,
        };
        if let Some((vd, vy)) = &valid {
            let (vl, vm) = validation_metric(&net, vd.features(), *vy)?;
            if !vl.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    what: "validation loss",
                });
            }
            record.valid_loss = Some(vl);
            record.valid_metric = Some(vm);
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, params.clone()));
                log.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
        } else {
            log.best_epoch = epoch;
        }
        log::trace!("epoch {epoch}: train loss {train_loss:.5} valid {:?}", record.valid_loss);
        log.epochs.push(record);
        if let (Some(es), Some(_)) = (spec.early_stop, &valid) {
            if since_best >= es.patience {
                break;
            }
        }
    }
    if let (Some(_), Some((_, p))) = (spec.early_stop, best) {
        net.set_parameters(&p);
    }
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teacher::{Architecture, TeacherNet};
    use ndarray::array;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = substream(seed, "blobs");
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            x[[i, 0]] = centre + rng.gen_range(-1.0..1.0);
            x[[i, 1]] = rng.gen_range(-3.0..3.0);
            y.push(c);
        }
        Dataset::from_matrix(x, Some(Targets::Classes(y)), 2).unwrap()
    }

    fn classifier(input: usize, hidden: Vec<usize>, classes: usize, seed: u64) -> TeacherNet {
        TeacherNet::init(
            &Architecture {
                input,
                hidden,
                dropout: vec![],
                output: OutputKind::Classifier { classes },
            },
            seed,
        )
        .unwrap()
    }

    fn accuracy(net: &TeacherNet, d: &Dataset) -> f64 {
        let pred = net.predict_class(d.features()).unwrap();
        let truth = d.classes().unwrap();
        pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
    }

    #[test]
    fn separable_blobs_reach_99_percent() {
        let d = blobs(200, 1);
        let spec = TrainSpec {
            epochs: 50,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 1,
            early_stop: None,
            standardize: true,
        };
        let (net, log) = train(classifier(2, vec![8], 2, 1), &d, None, &spec).unwrap();
        assert!(accuracy(&net, &d) >= 0.99);
        assert!(log.epochs.last().unwrap().train_loss < log.epochs[0].train_loss);
    }

    #[test]
    fn xor_is_learned() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let d = Dataset::from_matrix(x, Some(Targets::Classes(vec![0, 1, 1, 0])), 2).unwrap();
        let spec = TrainSpec {
            epochs: 2000,
            batch_size: 4,
            learning_rate: 2e-2,
            seed: 3,
            early_stop: None,
            standardize: false,
        };
        let (net, _) = train(classifier(2, vec![4], 2, 5), &d, None, &spec).unwrap();
        assert_eq!(accuracy(&net, &d), 1.0);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let d = blobs(64, 2);
        let spec = TrainSpec {
            epochs: 5,
            batch_size: 8,
            seed: 9,
            ..TrainSpec::default()
        };
        let a = train(classifier(2, vec![6, 3], 2, 4), &d, Some(&d), &spec).unwrap();
        let b = train(classifier(2, vec![6, 3], 2, 4), &d, Some(&d), &spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn early_stop_restores_best_epoch() {
        let d = blobs(100, 3);
        let v = blobs(40, 4);
        let spec = TrainSpec {
            epochs: 60,
            batch_size: 10,
            learning_rate: 5e-2,
            seed: 0,
            early_stop: Some(EarlyStop { patience: 3 }),
            standardize: true,
        };
        let (net, log) = train(classifier(2, vec![16], 2, 0), &d, Some(&v), &spec).unwrap();
        let best = log.epochs.iter().find(|e| e.epoch == log.best_epoch).unwrap();
        let vy = Supervision::Classes(v.classes().unwrap());
        assert!((net.loss(v.features(), vy).unwrap() - best.valid_loss.unwrap()).abs() < 1e-12);
        assert!(log.epochs.iter().all(|e| e.valid_loss.unwrap() >= best.valid_loss.unwrap()));
    }

    #[test]
    fn exploding_training_is_reported() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 * 1e150);
        let d = Dataset::from_matrix(x, Some(Targets::Continuous(vec![1e300; 20])), 0).unwrap();
        let net = TeacherNet::init(
            &Architecture {
                input: 1,
                hidden: vec![4],
                dropout: vec![],
                output: OutputKind::Regressor,
            },
            0,
        )
        .unwrap();
        let spec = TrainSpec {
            epochs: 3,
            standardize: false,
            early_stop: None,
            ..TrainSpec::default()
        };
        assert!(matches!(train(net, &d, None, &spec), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn target_kind_must_match_head() {
        let d = blobs(10, 0);
        let net = TeacherNet::init(
            &Architecture {
                input: 2,
                hidden: vec![2],
                dropout: vec![],
                output: OutputKind::Regressor,
            },
            0,
        )
        .unwrap();
        assert!(train(net, &d, None, &TrainSpec::default()).is_err());
    }

    #[test]
    fn log_csv_has_header() {
        let log = TrainingLog {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                valid_loss: None,
                valid_metric: Some(0.9),
            }],
            best_epoch: 1,
        };
        assert_eq!(log.to_csv(), "epoch,train_loss,valid_loss,valid_metric\n1,0.5,,0.9\n");
    }
}
