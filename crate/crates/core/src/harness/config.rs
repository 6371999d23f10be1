use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::Proportions;
use crate::distill::{default_alpha_grid, default_fraction_grid, AlphaSetting, FractionSetting};
use crate::error::{Error, Result};
use crate::teacher::{EarlyStop, TrainSpec};

/// Student-producing methods an experiment can compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    /// CART on the hard labels.
    Standard,
    /// Soft targets at temperature 1.
    VanillaSt,
    LabelSmoothing,
    ProbabilityShift,
    MixedLabels,
    MatchingLogits,
    Profweight,
    DataAugmentation,
    /// CART on the hard labels after dropping majority rows.
    Undersample,
    /// CART on the hard labels after duplicating minority rows.
    Oversample,
}

impl MethodName {
    pub const ALL: [MethodName; 10] = [
        MethodName::Standard,
        MethodName::VanillaSt,
        MethodName::LabelSmoothing,
        MethodName::ProbabilityShift,
        MethodName::MixedLabels,
        MethodName::MatchingLogits,
        MethodName::Profweight,
        MethodName::DataAugmentation,
        MethodName::Undersample,
        MethodName::Oversample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Standard => "standard",
            MethodName::VanillaSt => "vanilla_st",
            MethodName::LabelSmoothing => "label_smoothing",
            MethodName::ProbabilityShift => "probability_shift",
            MethodName::MixedLabels => "mixed_labels",
            MethodName::MatchingLogits => "matching_logits",
            MethodName::Profweight => "profweight",
            MethodName::DataAugmentation => "data_augmentation",
            MethodName::Undersample => "undersample",
            MethodName::Oversample => "oversample",
        }
    }

    /// Whether the method needs a classification task.
    pub fn classification_only(self) -> bool {
        !matches!(self, MethodName::Standard | MethodName::DataAugmentation)
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method {s:?}")))
    }
}

/// Evaluation measures, written in configs as `accuracy`, `f1`, `mse`,
/// `weighted_recall`, `hybrid_f1`, `leaf_entropy` or `within_<t>`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MetricName {
    Accuracy,
    F1,
    Mse,
    WeightedRecall,
    HybridF1,
    LeafEntropy,
    /// Share of rows with absolute error below the threshold.
    Within(f64),
}

impl MetricName {
    pub fn is_classification(self) -> bool {
        matches!(
            self,
            MetricName::Accuracy | MetricName::F1 | MetricName::WeightedRecall | MetricName::HybridF1
        )
    }

    /// Factor and decimals used when printing table cells.
    pub fn display(self) -> (f64, usize, &'static str) {
        match self {
            MetricName::Accuracy | MetricName::F1 | MetricName::Within(_) => (100.0, 2, "%"),
            MetricName::Mse => (100.0, 2, "x1e-2"),
            MetricName::WeightedRecall | MetricName::HybridF1 | MetricName::LeafEntropy => (1.0, 3, ""),
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricName::Accuracy => f.write_str("accuracy"),
            MetricName::F1 => f.write_str("f1"),
            MetricName::Mse => f.write_str("mse"),
            MetricName::WeightedRecall => f.write_str("weighted_recall"),
            MetricName::HybridF1 => f.write_str("hybrid_f1"),
            MetricName::LeafEntropy => f.write_str("leaf_entropy"),
            MetricName::Within(t) => write!(f, "within_{t}"),
        }
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "accuracy" => MetricName::Accuracy,
            "f1" => MetricName::F1,
            "mse" => MetricName::Mse,
            "weighted_recall" => MetricName::WeightedRecall,
            "hybrid_f1" => MetricName::HybridF1,
            "leaf_entropy" => MetricName::LeafEntropy,
            _ => {
                let t = s
                    .strip_prefix("within_")
                    .and_then(|t| t.parse::<f64>().ok())
                    .filter(|t| *t > 0.0 && t.is_finite())
                    .ok_or_else(|| Error::invalid(format!("unknown metric {s:?}")))?;
                MetricName::Within(t)
            }
        })
    }
}

impl TryFrom<String> for MetricName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MetricName> for String {
    fn from(m: MetricName) -> String {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    #[serde(default)]
    pub valid: f64,
    #[serde(default)]
    pub test: f64,
    #[serde(default)]
    pub unlabeled: f64,
    /// Stratify by class; ignored for regression.
    #[serde(default = "yes")]
    pub stratified: bool,
}

impl SplitConfig {
    pub fn proportions(&self) -> Proportions {
        Proportions {
            train: self.train,
            valid: self.valid,
            test: self.test,
            unlabeled: self.unlabeled,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    /// Drop probability per hidden layer; empty for none.
    #[serde(default)]
    pub dropout: Vec<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "yes")]
    pub standardize: bool,
}

impl TeacherConfig {
    pub fn train_spec(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            early_stop: (self.patience > 0).then_some(EarlyStop {
                patience: self.patience,
            }),
            standardize: self.standardize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSettings {
    #[serde(default = "default_smoothing_t")]
    pub label_smoothing_temperature: f64,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaSetting,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub profweight_margin: f64,
    #[serde(default = "default_fraction")]
    pub augmentation_fraction: FractionSetting,
    #[serde(default = "default_fraction_grid")]
    pub fraction_grid: Vec<f64>,
    #[serde(default = "default_pilot_depth")]
    pub pilot_depth: usize,
    /// Target minority share for the resampling baselines.
    #[serde(default = "default_resample_ratio")]
    pub resample_ratio: f64,
    /// Share of the training rows held out for teacher early stopping and
    /// fraction selection when the split has no validation part.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
}

impl Default for DistillSettings {
    fn default() -> Self {
        Self {
            label_smoothing_temperature: default_smoothing_t(),
            alpha: default_alpha(),
            alpha_grid: default_alpha_grid(),
            profweight_margin: 0.0,
            augmentation_fraction: default_fraction(),
            fraction_grid: default_fraction_grid(),
            pilot_depth: default_pilot_depth(),
            resample_ratio: default_resample_ratio(),
            holdout_fraction: default_holdout(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Path to a dataset manifest, relative to the config file.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Name of a fetched dataset in the cache directory.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_samples_leaf: usize,
    pub methods: Vec<MethodName>,
    /// Empty means accuracy and F1 for classification, MSE for regression.
    #[serde(default)]
    pub metrics: Vec<MetricName>,
    /// Class name counted as positive by F1 and the fraud metrics.
    #[serde(default)]
    pub positive_class: Option<String>,
    /// Feature holding the transaction amount for the fraud metrics.
    #[serde(default)]
    pub amount_column: Option<String>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub split: SplitConfig,
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub distill: DistillSettings,
}

/// Command-line replacements for config entries.
#[derive(Clone, Debug, Default)]
pub struct ConfigOverrides {
    pub seeds: Option<Vec<u64>>,
    pub depths: Option<Vec<usize>>,
    pub methods: Option<Vec<MethodName>>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("experiment config", e.to_string()))
    }

    /// Reads a config file; a relative `manifest` or `output` is taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(m) = &c.manifest {
            if m.is_relative() {
                c.manifest = Some(base.join(m));
            }
        }
        if let Some(o) = &c.output {
            if o.is_relative() {
                c.output = Some(base.join(o));
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: ConfigOverrides) {
        if let Some(s) = o.seeds {
            self.seeds = s;
        }
        if let Some(d) = o.depths {
            self.depths = d;
        }
        if let Some(m) = o.methods {
            self.methods = m;
        }
        if let Some(out) = o.output {
            self.output = Some(out);
        }
    }

    /// First 16 hex digits of the SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        hex::encode(&Sha256::digest(self.to_toml().as_bytes())[..8])
    }

    pub fn max_depth(&self) -> usize {
        self.depths.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_some() == self.dataset.is_some() {
            return Err(Error::invalid("set exactly one of `manifest` and `dataset`"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("no seeds"));
        }
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::invalid("depths must be nonempty and at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(m) {
                return Err(Error::invalid(format!("method {m} listed twice")));
            }
            seen.push(*m);
        }
        crate::dataio::SplitSpec {
            proportions: self.split.proportions(),
            seed: 0,
            stratified: self.split.stratified,
        }
        .validate()?;
        if self.teacher.hidden.is_empty() {
            return Err(Error::invalid("teacher needs at least one hidden layer"));
        }
        self.teacher.train_spec(0).validate()?;
        let d = &self.distill;
        if d.label_smoothing_temperature.is_nan() || d.label_smoothing_temperature <= 0.0 {
            return Err(Error::invalid("label smoothing temperature must be positive"));
        }
        if d.alpha_grid.is_empty() || d.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid("alpha grid must be nonempty and inside [0, 1]"));
        }
        if d.fraction_grid.is_empty() || d.fraction_grid.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::invalid("fraction grid must be nonempty and inside [0, 1]"));
        }
        if let AlphaSetting::Fixed(a) = d.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid("alpha outside [0, 1]"));
            }
        }
        if let FractionSetting::Fixed(f) = d.augmentation_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid("augmentation fraction outside [0, 1]"));
            }
        }
        if d.pilot_depth == 0 {
            return Err(Error::invalid("pilot depth must be at least 1"));
        }
        if !(d.resample_ratio > 0.0 && d.resample_ratio < 1.0) {
            return Err(Error::invalid("resample ratio must lie in (0, 1)"));
        }
        if !(d.holdout_fraction > 0.0 && d.holdout_fraction < 1.0) {
            return Err(Error::invalid("holdout fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Parses `"3"` as seeds 0, 1, 2 and `"4,9,11"` as that list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid(format!("bad seed list {s:?}"));
    if s.contains(',') {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        Ok((0..n).collect())
    }
}

/// Parses `"4-12"` as an inclusive range and `"4,6,8"` as a list.
pub fn parse_depths(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::invalid(format!("bad depth list {s:?}"));
    if let Some((a, b)) = s.split_once('-') {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<MethodName>> {
    s.split(',').map(|t| t.trim().parse()).collect()
}

fn yes() -> bool {
    true
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-3
}
fn default_patience() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_depths() -> Vec<usize> {
    (4..=12).collect()
}
fn default_min_leaf() -> usize {
    40
}
fn default_smoothing_t() -> f64 {
    5.0
}
fn default_alpha() -> AlphaSetting {
    AlphaSetting::Tune
}
fn default_fraction() -> FractionSetting {
    FractionSetting::Select
}
fn default_pilot_depth() -> usize {
    7
}
fn default_resample_ratio() -> f64 {
    0.002
}
fn default_holdout() -> f64 {
    0.2
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADULT: &str = r#"
name = "adult"
dataset = "adult"
methods = ["standard", "vanilla_st", "mixed_labels"]
metrics = ["f1", "accuracy"]
positive_class = ">50K"

[split]
train = 0.8
valid = 0.1
test = 0.1

[teacher]
hidden = [48, 24]
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(ADULT).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seeds, (0..10).collect::<Vec<_>>());
        assert_eq!(c.depths, (4..=12).collect::<Vec<_>>());
        assert_eq!(c.min_samples_leaf, 40);
        assert_eq!(c.teacher.batch_size, 128);
        assert_eq!(c.distill.alpha, AlphaSetting::Tune);
        assert_eq!(c.distill.fraction_grid, vec![0.0, 0.02, 0.04, 0.05, 0.06, 0.08, 0.10]);
        assert_eq!(c.max_depth(), 12);
    }

    #[test]
    fn round_trip_and_hash() {
        let c = ExperimentConfig::from_toml(ADULT).unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut other = c.clone();
        other.seeds = vec![1];
        assert_ne!(other.hash(), c.hash());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig::from_toml(ADULT).unwrap();
        c.depths.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml(ADULT).unwrap();
        c.methods.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml(ADULT).unwrap();
        c.manifest = Some("x.toml".into());
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml(&ADULT.replace("standard", "bagging")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{ADULT}\nbogus = 1\n")).is_err());
    }

    #[test]
    fn overrides_and_parsers() {
        let mut c = ExperimentConfig::from_toml(ADULT).unwrap();
        c.apply(ConfigOverrides {
            seeds: Some(parse_seeds("3").unwrap()),
            depths: Some(parse_depths("4-6").unwrap()),
            methods: Some(parse_methods("standard,profweight").unwrap()),
            output: None,
        });
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.depths, vec![4, 5, 6]);
        assert_eq!(c.methods, vec![MethodName::Standard, MethodName::Profweight]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert_eq!(parse_depths("8,4").unwrap(), vec![8, 4]);
        assert!(parse_depths("6-4").is_err());
        assert!(parse_methods("standard,nope").is_err());
    }

    #[test]
    fn metric_names() {
        for m in ["accuracy", "f1", "mse", "weighted_recall", "hybrid_f1", "leaf_entropy", "within_0.05"] {
            assert_eq!(m.parse::<MetricName>().unwrap().to_string(), m);
        }
        assert!("within_-1".parse::<MetricName>().is_err());
        assert!("auc".parse::<MetricName>().is_err());
    }
}
