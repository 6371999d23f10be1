use ndarray::Array2;

use super::net::{Architecture, OutputKind, TeacherNet};
use super::train::{train, TrainSpec};
use crate::dataio::Dataset;
use crate::error::{Error, Result};

/// Linear softmax classifier reading one frozen hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub layer: usize,
    /// A network with no hidden layers: `K × width` weights plus bias, with
    /// its own input standardization.
    pub classifier: TeacherNet,
    pub valid_accuracy: f64,
}

impl Probe {
    /// Class probabilities for rows of `x`, read through the teacher.
    pub fn predict_proba(&self, teacher: &TeacherNet, x: ndarray::ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let h = teacher.hidden_activations(x, self.layer)?;
        self.classifier.predict_proba(h.view(), 1.0)
    }
}

/// One probe per hidden layer of a teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSet {
    pub probes: Vec<Probe>,
}

impl ProbeSet {
    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }
}

fn activations_dataset(net: &TeacherNet, d: &Dataset, layer: usize) -> Result<Dataset> {
    let h = net.hidden_activations(d.features(), layer)?;
    Dataset::from_matrix(h, d.targets().cloned(), d.num_classes())
}

/// Trains a softmax probe on the evaluation-mode activations of every hidden
/// layer of `net` against the hard labels. The teacher is only read.
pub fn train_probes(net: &TeacherNet, train_set: &Dataset, valid: &Dataset, spec: &TrainSpec) -> Result<ProbeSet> {
    let OutputKind::Classifier { classes } = net.output else {
        return Err(Error::WrongTask {
            expected: "classification",
        });
    };
    let mut probes = Vec::with_capacity(net.num_hidden());
    for layer in 0..net.num_hidden() {
        let tr = activations_dataset(net, train_set, layer)?;
        let va = activations_dataset(net, valid, layer)?;
        let arch = Architecture {
            input: tr.n_features(),
            hidden: vec![],
            dropout: vec![],
            output: OutputKind::Classifier { classes },
        };
        let layer_spec = TrainSpec {
            seed: spec.seed.wrapping_add(layer as u64),
            ..spec.clone()
        };
        let init = TeacherNet::init(&arch, layer_spec.seed)?;
        let valid_opt = (va.n_rows() > 0).then_some(&va);
        let (classifier, _) = train(init, &tr, valid_opt, &layer_spec)?;
        let eval = if va.n_rows() > 0 { &va } else { &tr };
        let pred = classifier.predict_class(eval.features())?;
        let truth = eval.classes()?;
        let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
        probes.push(Probe {
            layer,
            classifier,
            valid_accuracy: hits as f64 / truth.len().max(1) as f64,
        });
    }
    Ok(ProbeSet { probes })
}
