use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    LabelSmoothing,
    ProbabilityShift,
    MixedLabels,
    MatchingLogits,
    Profweight,
    DataAugmentation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TuneTag {
    Tune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SelectTag {
    Select,
}

/// A fixed mixing weight, or `"tune"` to pick one on validation data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "AlphaRepr", into = "AlphaRepr")]
pub enum AlphaSetting {
    Fixed(f64),
    Tune,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AlphaRepr {
    Fixed(f64),
    Tag(TuneTag),
}

impl From<AlphaRepr> for AlphaSetting {
    fn from(r: AlphaRepr) -> Self {
        match r {
            AlphaRepr::Fixed(a) => AlphaSetting::Fixed(a),
            AlphaRepr::Tag(TuneTag::Tune) => AlphaSetting::Tune,
        }
    }
}

impl From<AlphaSetting> for AlphaRepr {
    fn from(a: AlphaSetting) -> Self {
        match a {
            AlphaSetting::Fixed(a) => AlphaRepr::Fixed(a),
            AlphaSetting::Tune => AlphaRepr::Tag(TuneTag::Tune),
        }
    }
}

/// A fixed augmentation fraction, or `"select"` to sweep the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "FractionRepr", into = "FractionRepr")]
pub enum FractionSetting {
    Fixed(f64),
    Select,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FractionRepr {
    Fixed(f64),
    Tag(SelectTag),
}

impl From<FractionRepr> for FractionSetting {
    fn from(r: FractionRepr) -> Self {
        match r {
            FractionRepr::Fixed(f) => FractionSetting::Fixed(f),
            FractionRepr::Tag(SelectTag::Select) => FractionSetting::Select,
        }
    }
}

impl From<FractionSetting> for FractionRepr {
    fn from(f: FractionSetting) -> Self {
        match f {
            FractionSetting::Fixed(f) => FractionRepr::Fixed(f),
            FractionSetting::Select => FractionRepr::Tag(SelectTag::Select),
        }
    }
}

/// Mixing weights tried when tuning: 0, 0.1, ..., 1.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

/// Fractions of the unlabeled pool tried when selecting: 0, 2, 4, 5, 6, 8, 10 %.
pub fn default_fraction_grid() -> Vec<f64> {
    vec![0.0, 0.02, 0.04, 0.05, 0.06, 0.08, 0.10]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    pub method: Method,
    #[serde(default = "one", rename = "T")]
    pub temperature: f64,
    #[serde(default = "tune")]
    pub alpha: AlphaSetting,
    #[serde(default = "select")]
    pub augmentation_fraction: FractionSetting,
    #[serde(default)]
    pub profweight_margin: f64,
}

fn one() -> f64 {
    1.0
}

fn tune() -> AlphaSetting {
    AlphaSetting::Tune
}

fn select() -> FractionSetting {
    FractionSetting::Select
}

impl DistillConfig {
    /// Defaults for `method`: temperature 5 for label smoothing, 1 otherwise.
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            temperature: if method == Method::LabelSmoothing { 5.0 } else { 1.0 },
            alpha: AlphaSetting::Tune,
            augmentation_fraction: FractionSetting::Select,
            profweight_margin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if let AlphaSetting::Fixed(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(format!("alpha {a} outside [0, 1]")));
            }
        }
        if let FractionSetting::Fixed(f) = self.augmentation_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::invalid(format!("augmentation fraction {f} outside [0, 1]")));
            }
        }
        if !self.profweight_margin.is_finite() {
            return Err(Error::invalid("profweight margin must be finite"));
        }
        Ok(())
    }
}
