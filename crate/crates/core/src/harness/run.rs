use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodName, MetricName};
use super::fetch::cached_manifest;
use super::report::{ExperimentReport, Failure, TeacherRecord};
use crate::dataio::{oversample, split, undersample, Dataset, Manifest, PreparedDataset, SplitSpec, Splits, Task};
use crate::distill::{
    augment, matching_logits, mixed_labels, probability_shift, probe_confidences, select_fraction, soft_targets,
    tune_alpha_per_depth, weights_from_confidences, AlphaSetting, FractionSetting, FractionSweep, SampleWeights,
    SelectionMetric, TargetSet,
};
use crate::error::{Error, Result};
use crate::metrics;
use crate::rng::substream;
use crate::teacher::{train, train_probes, Architecture, OutputKind, TeacherNet, TrainingLog};
use crate::tree::{StudentTree, TreeParams};

/// Bins used by the leaf entropy metric.
pub const ENTROPY_BINS: usize = 20;

/// One evaluated cell for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub method: MethodName,
    pub depth: usize,
    pub metric: MetricName,
    pub value: f64,
}

/// Everything one seed produced.
#[derive(Clone, Debug, Default)]
pub struct SeedOutcome {
    pub seed: u64,
    pub teacher: Option<TeacherRecord>,
    pub teacher_log: Option<TrainingLog>,
    pub values: Vec<CellValue>,
    pub failures: Vec<Failure>,
    pub fraction_sweep: Option<FractionSweep>,
    pub alphas: Option<Vec<f64>>,
}

impl SeedOutcome {
    fn fail(&mut self, method: Option<MethodName>, stage: &str, e: &Error) {
        log::warn!(
            "seed {}{}: {stage} failed: {e}",
            self.seed,
            method.map(|m| format!(" {m}")).unwrap_or_default()
        );
        self.failures.push(Failure {
            seed: self.seed,
            method,
            stage: stage.to_string(),
            message: e.to_string(),
        });
    }
}

/// Loads the dataset named by the config.
pub fn load_dataset(config: &ExperimentConfig) -> Result<PreparedDataset> {
    let path = match (&config.manifest, &config.dataset) {
        (Some(m), _) => m.clone(),
        (None, Some(name)) => cached_manifest(name)?,
        (None, None) => return Err(Error::invalid("config names no dataset")),
    };
    Manifest::load(path)?.prepare()
}

/// Runs every seed of the experiment and aggregates the report.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = load_dataset(config)?;
    let name = config
        .dataset
        .clone()
        .or_else(|| config.manifest.as_ref().map(|m| m.display().to_string()))
        .unwrap_or_default();
    run_prepared(config, &prepared, &name)
}

/// Regression recipe: teacher on the labeled rows, fraction selection with a
/// pilot tree, augmentation, then standard and augmented depth sweeps.
pub fn run_regression_augmentation(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let prepared = load_dataset(config)?;
    if prepared.dataset.is_classification() {
        return Err(Error::WrongTask { expected: "regression" });
    }
    run(config)
}

/// [`run`] on an already loaded dataset.
pub fn run_prepared(config: &ExperimentConfig, prepared: &PreparedDataset, dataset_name: &str) -> Result<ExperimentReport> {
    let outcomes = run_seeds(config, prepared)?;
    let metrics = resolve_metrics(config, &prepared.dataset)?;
    let task = if prepared.dataset.is_classification() {
        Task::Classification
    } else {
        Task::Regression
    };
    Ok(ExperimentReport::assemble(config, dataset_name, task, &metrics, outcomes))
}

/// Per-seed outcomes in seed order.
pub fn run_seeds(config: &ExperimentConfig, prepared: &PreparedDataset) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    let ctx = Context::new(config, prepared)?;
    Ok(config.seeds.par_iter().map(|&s| ctx.run_seed(s)).collect())
}

/// Metrics the config asks for, or the task's defaults.
pub fn resolve_metrics(config: &ExperimentConfig, d: &Dataset) -> Result<Vec<MetricName>> {
    let classification = d.is_classification();
    let metrics = if config.metrics.is_empty() {
        if classification {
            let mut m = vec![MetricName::Accuracy];
            if d.num_classes() == 2 {
                m.push(MetricName::F1);
            }
            m
        } else {
            vec![MetricName::Mse]
        }
    } else {
        config.metrics.clone()
    };
    if let Some(m) = metrics.iter().find(|m| m.is_classification() != classification) {
        return Err(Error::invalid(format!("metric {m} does not fit the dataset's task")));
    }
    Ok(metrics)
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    data: &'a Dataset,
    metrics: Vec<MetricName>,
    positive: Option<usize>,
    amount_col: Option<usize>,
    depths: Vec<usize>,
}

/// Splits and teacher shared by every method of one seed.
struct SeedData {
    splits: Splits,
    /// Rows the teacher and the probes are fitted on.
    fit: Dataset,
    /// Rows used for early stopping and tuning.
    valid: Dataset,
    teacher: std::result::Result<TeacherNet, String>,
}

type Sweep = Vec<(usize, StudentTree)>;

impl<'a> Context<'a> {
    fn new(config: &'a ExperimentConfig, prepared: &'a PreparedDataset) -> Result<Self> {
        let data = &prepared.dataset;
        let metrics = resolve_metrics(config, data)?;
        if !data.is_classification() {
            if let Some(m) = config.methods.iter().find(|m| m.classification_only()) {
                return Err(Error::invalid(format!("method {m} needs a classification dataset")));
            }
        }
        let positive = match &config.positive_class {
            Some(name) => Some(
                data.class_names()
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::invalid(format!("positive class `{name}` not among the labels")))?,
            ),
            None => prepared.positive_class.or((data.num_classes() == 2).then_some(1)),
        };
        let needs_positive = metrics
            .iter()
            .any(|m| matches!(m, MetricName::F1 | MetricName::WeightedRecall | MetricName::HybridF1));
        if needs_positive && positive.is_none() {
            return Err(Error::invalid("F1 metrics need a positive class"));
        }
        let amount_col = match &config.amount_column {
            Some(name) => Some(
                data.meta()
                    .iter()
                    .position(|f| &f.name == name)
                    .ok_or_else(|| Error::invalid(format!("amount column `{name}` not among the features")))?,
            ),
            None => None,
        };
        if amount_col.is_none() && metrics.iter().any(|m| matches!(m, MetricName::WeightedRecall | MetricName::HybridF1)) {
            return Err(Error::invalid("amount-weighted metrics need `amount_column`"));
        }
        let mut depths = config.depths.clone();
        depths.sort_unstable();
        depths.dedup();
        Ok(Self {
            config,
            data,
            metrics,
            positive,
            amount_col,
            depths,
        })
    }

    fn params(&self, max_depth: usize) -> TreeParams {
        TreeParams {
            max_depth,
            min_samples_leaf: self.config.min_samples_leaf,
        }
    }

    fn selection_metric(&self) -> SelectionMetric {
        let f1 = self
            .metrics
            .iter()
            .any(|m| matches!(m, MetricName::F1 | MetricName::HybridF1 | MetricName::WeightedRecall));
        match (f1, self.positive) {
            (true, Some(positive)) => SelectionMetric::F1 { positive },
            _ => SelectionMetric::Accuracy,
        }
    }

    fn run_seed(&self, seed: u64) -> SeedOutcome {
        let mut out = SeedOutcome {
            seed,
            ..Default::default()
        };
        let data = match self.prepare_seed(seed, &mut out) {
            Ok(d) => d,
            Err(e) => {
                out.fail(None, "split", &e);
                return out;
            }
        };
        if let Err(e) = &data.teacher {
            out.failures.push(Failure {
                seed,
                method: None,
                stage: "teacher".into(),
                message: e.clone(),
            });
        }

        // the standard sweep doubles as the ProfWeight baseline
        let needs_standard = self
            .config
            .methods
            .iter()
            .any(|m| matches!(m, MethodName::Standard | MethodName::Profweight));
        let standard = needs_standard.then(|| self.standard_sweep(&data));

        let results: Vec<(MethodName, Result<MethodOutput>)> = self
            .config
            .methods
            .par_iter()
            .map(|&m| (m, self.method(m, seed, &data, standard.as_ref())))
            .collect();
        for (m, r) in results {
            match r {
                Ok(o) => {
                    if o.sweep.is_some() {
                        out.fraction_sweep = o.sweep;
                    }
                    if o.alphas.is_some() {
                        out.alphas = o.alphas;
                    }
                    out.values.extend(o.values);
                }
                Err(e) => out.fail(Some(m), "student", &e),
            }
        }
        out
    }

    fn prepare_seed(&self, seed: u64, out: &mut SeedOutcome) -> Result<SeedData> {
        let spec = SplitSpec {
            proportions: self.config.split.proportions(),
            seed,
            stratified: self.config.split.stratified && self.data.is_classification(),
        };
        let splits = split(self.data, &spec)?;
        if splits.train.n_rows() == 0 || splits.test.n_rows() == 0 {
            return Err(Error::invalid("split leaves no training or test rows"));
        }
        let (fit, valid) = if splits.valid.n_rows() > 0 {
            (splits.train.clone(), splits.valid.clone())
        } else {
            let h = self.config.distill.holdout_fraction;
            let inner = split(
                &splits.train,
                &SplitSpec {
                    proportions: crate::dataio::Proportions {
                        train: 1.0 - h,
                        valid: h,
                        test: 0.0,
                        unlabeled: 0.0,
                    },
                    seed: substream(seed, "holdout").gen(),
                    stratified: spec.stratified,
                },
            )?;
            (inner.train, inner.valid)
        };
        let needs_teacher = self
            .config
            .methods
            .iter()
            .any(|m| !matches!(m, MethodName::Standard | MethodName::Undersample | MethodName::Oversample));
        let teacher = if needs_teacher {
            match self.train_teacher(seed, &fit, &valid, &splits.test) {
                Ok((net, log, record)) => {
                    out.teacher = Some(record);
                    out.teacher_log = Some(log);
                    Ok(net)
                }
                Err(e) => Err(e.to_string()),
            }
        } else {
            Err("no method needs a teacher".to_string())
        };
        Ok(SeedData {
            splits,
            fit,
            valid,
            teacher,
        })
    }

    fn train_teacher(&self, seed: u64, fit: &Dataset, valid: &Dataset, test: &Dataset) -> Result<(TeacherNet, TrainingLog, TeacherRecord)> {
        let tc = &self.config.teacher;
        let arch = Architecture {
            input: fit.n_features(),
            hidden: tc.hidden.clone(),
            dropout: tc.dropout.clone(),
            output: if fit.is_classification() {
                OutputKind::Classifier {
                    classes: fit.num_classes(),
                }
            } else {
                OutputKind::Regressor
            },
        };
        let init = TeacherNet::init(&arch, seed)?;
        let valid_opt = (valid.n_rows() > 0).then_some(valid);
        let (net, log) = train(init, fit, valid_opt, &tc.train_spec(seed))?;
        let mut metrics = BTreeMap::new();
        if net.is_classifier() {
            let pred = net.predict_class(test.features())?;
            let truth = test.classes()?;
            metrics.insert("accuracy".to_string(), metrics::accuracy(&pred, truth)?);
            if let Some(p) = self.positive {
                metrics.insert("f1".to_string(), metrics::f1_binary(&pred, truth, p)?);
            }
        } else {
            let pred = net.predict_value(test.features())?;
            metrics.insert("mse".to_string(), metrics::mse(&pred, test.continuous()?)?);
        }
        let record = TeacherRecord {
            seed,
            fingerprint: net.fingerprint(),
            epochs_run: log.epochs.len(),
            best_epoch: log.best_epoch,
            metrics,
        };
        Ok((net, log, record))
    }

    fn teacher<'d>(&self, data: &'d SeedData) -> Result<&'d TeacherNet> {
        data.teacher
            .as_ref()
            .map_err(|e| Error::invalid(format!("teacher unavailable: {e}")))
    }

    /// Fits once at the deepest depth and truncates for the others.
    fn sweep(&self, d: &Dataset, targets: &TargetSet, weights: Option<&SampleWeights>, depths: &[usize]) -> Result<Sweep> {
        let max = depths.iter().copied().max().ok_or_else(|| Error::invalid("no depths"))?;
        let tree = StudentTree::fit(d, targets, weights, self.params(max))?;
        Ok(depths.iter().map(|&k| (k, tree.truncate(k))).collect())
    }

    fn standard_sweep(&self, data: &SeedData) -> std::result::Result<Sweep, String> {
        TargetSet::from_dataset(&data.splits.train)
            .and_then(|hard| self.sweep(&data.splits.train, &hard, None, &self.depths))
            .map_err(|e| e.to_string())
    }

    fn method(&self, m: MethodName, seed: u64, data: &SeedData, standard: Option<&std::result::Result<Sweep, String>>) -> Result<MethodOutput> {
        let train_set = &data.splits.train;
        let mut extra = MethodOutput::default();
        let sweep = match m {
            MethodName::Standard => standard
                .expect("standard sweep computed")
                .clone()
                .map_err(Error::invalid)?,
            MethodName::VanillaSt => {
                let t = soft_targets(self.teacher(data)?, train_set, 1.0)?;
                self.sweep(train_set, &t, None, &self.depths)?
            }
            MethodName::LabelSmoothing => {
                let t = soft_targets(self.teacher(data)?, train_set, self.config.distill.label_smoothing_temperature)?;
                self.sweep(train_set, &t, None, &self.depths)?
            }
            MethodName::ProbabilityShift => {
                let soft = soft_targets(self.teacher(data)?, train_set, 1.0)?;
                let t = probability_shift(&soft, train_set.classes()?)?;
                self.sweep(train_set, &t, None, &self.depths)?
            }
            MethodName::MatchingLogits => {
                let t = matching_logits(self.teacher(data)?, train_set)?;
                self.sweep(train_set, &t, None, &self.depths)?
            }
            MethodName::MixedLabels => {
                let soft = soft_targets(self.teacher(data)?, train_set, 1.0)?;
                let hard = TargetSet::from_dataset(train_set)?;
                let alphas = match self.config.distill.alpha {
                    AlphaSetting::Fixed(a) => vec![a; self.depths.len()],
                    AlphaSetting::Tune => tune_alpha_per_depth(
                        &soft,
                        &hard,
                        train_set,
                        &data.valid,
                        &self.config.distill.alpha_grid,
                        &self.depths,
                        self.config.min_samples_leaf,
                        self.selection_metric(),
                    )?,
                };
                let sweep = self.grouped_sweep(&alphas, |&a| {
                    let t = mixed_labels(&soft, &hard, a)?;
                    Ok((t, None))
                }, train_set)?;
                extra.alphas = Some(alphas);
                sweep
            }
            MethodName::Profweight => {
                let teacher = self.teacher(data)?;
                let standard = standard
                    .expect("standard sweep computed")
                    .as_ref()
                    .map_err(|e| Error::invalid(format!("baseline unavailable: {e}")))?;
                let probes = train_probes(teacher, &data.fit, &data.valid, &self.config.teacher.train_spec(seed))?;
                let conf = probe_confidences(teacher, &probes, train_set)?;
                let truth = data.valid.classes()?;
                let margin = self.config.distill.profweight_margin;
                // probes clearing each depth's baseline; equal subsets share weights
                let mut subsets = Vec::with_capacity(self.depths.len());
                for (_, tree) in standard {
                    let pred = tree.predict_classes(data.valid.features())?;
                    let baseline = metrics::accuracy(&pred, truth)?;
                    let chosen: Vec<usize> = conf
                        .iter()
                        .filter(|(_, acc, _)| *acc >= baseline + margin)
                        .map(|(l, _, _)| *l)
                        .collect();
                    subsets.push((chosen, baseline));
                }
                let hard = TargetSet::from_dataset(train_set)?;
                let keys: Vec<Vec<usize>> = subsets.iter().map(|(c, _)| c.clone()).collect();
                self.grouped_sweep(&keys, |key| {
                    let baseline = subsets.iter().find(|(c, _)| c == key).map(|(_, b)| *b).unwrap_or(0.0);
                    let w = weights_from_confidences(&conf, baseline, margin)?;
                    Ok((hard.clone(), Some(w)))
                }, train_set)?
            }
            MethodName::DataAugmentation => {
                let teacher = self.teacher(data)?;
                let unlabeled = &data.splits.unlabeled;
                let d = &self.config.distill;
                let fraction = match d.augmentation_fraction {
                    FractionSetting::Fixed(f) => f,
                    FractionSetting::Select => {
                        let pilot = self.params(d.pilot_depth);
                        let s = select_fraction(&data.fit, unlabeled, teacher, &d.fraction_grid, pilot, &data.valid, seed)?;
                        let f = s.fraction;
                        extra.sweep = Some(s);
                        f
                    }
                };
                let augmented = augment(train_set, unlabeled, teacher, fraction, seed)?;
                let t = TargetSet::from_dataset(&augmented)?;
                self.sweep(&augmented, &t, None, &self.depths)?
            }
            MethodName::Undersample | MethodName::Oversample => {
                let ratio = self.config.distill.resample_ratio;
                let resampled = if m == MethodName::Undersample {
                    undersample(train_set, ratio, seed)?
                } else {
                    oversample(train_set, ratio, seed)?
                };
                let t = TargetSet::from_dataset(&resampled)?;
                self.sweep(&resampled, &t, None, &self.depths)?
            }
        };
        for (depth, tree) in &sweep {
            for (metric, value) in self.evaluate(tree, &data.splits.test)? {
                extra.values.push(CellValue {
                    method: m,
                    depth: *depth,
                    metric,
                    value,
                });
            }
        }
        Ok(extra)
    }

    /// One fit per distinct key, truncated to the depths that share it.
    fn grouped_sweep<K: PartialEq>(
        &self,
        keys: &[K],
        make: impl Fn(&K) -> Result<(TargetSet, Option<SampleWeights>)>,
        d: &Dataset,
    ) -> Result<Sweep> {
        let mut out: Vec<Option<StudentTree>> = vec![None; self.depths.len()];
        for (i, key) in keys.iter().enumerate() {
            if out[i].is_some() {
                continue;
            }
            let members: Vec<usize> = (i..keys.len()).filter(|&j| keys[j] == *key).collect();
            let depths: Vec<usize> = members.iter().map(|&j| self.depths[j]).collect();
            let (t, w) = make(key)?;
            let trees = self.sweep(d, &t, w.as_ref(), &depths)?;
            for (j, (_, tree)) in members.into_iter().zip(trees) {
                out[j] = Some(tree);
            }
        }
        Ok(self
            .depths
            .iter()
            .zip(out)
            .map(|(&k, t)| (k, t.expect("every depth fitted")))
            .collect())
    }

    fn evaluate(&self, tree: &StudentTree, test: &Dataset) -> Result<Vec<(MetricName, f64)>> {
        let x = test.features();
        let mut out = Vec::with_capacity(self.metrics.len());
        if test.is_classification() {
            let pred = tree.predict_classes(x)?;
            let truth = test.classes()?;
            let amounts: Option<Vec<f64>> = self.amount_col.map(|c| x.column(c).to_vec());
            for &m in &self.metrics {
                let positive = self.positive.unwrap_or(1);
                let v = match m {
                    MetricName::Accuracy => metrics::accuracy(&pred, truth)?,
                    MetricName::F1 => metrics::f1_binary(&pred, truth, positive)?,
                    MetricName::WeightedRecall => {
                        metrics::weighted_recall(&pred, truth, amounts.as_deref().unwrap_or_default(), positive)?
                    }
                    MetricName::HybridF1 => metrics::hybrid_f1(&pred, truth, amounts.as_deref().unwrap_or_default(), positive)?,
                    _ => unreachable!("metrics checked against the task"),
                };
                out.push((m, v));
            }
        } else {
            let pred = tree.predict_values(x)?;
            let truth = test.continuous()?;
            for &m in &self.metrics {
                let v = match m {
                    MetricName::Mse => metrics::mse(&pred, truth)?,
                    MetricName::LeafEntropy => metrics::leaf_homogeneity(tree, test, truth, ENTROPY_BINS)?,
                    MetricName::Within(t) => metrics::error_proportions(&pred, truth, &[t])?[0],
                    _ => unreachable!("metrics checked against the task"),
                };
                out.push((m, v));
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct MethodOutput {
    values: Vec<CellValue>,
    sweep: Option<FractionSweep>,
    alphas: Option<Vec<f64>>,
}
