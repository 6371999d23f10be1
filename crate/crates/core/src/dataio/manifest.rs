//! Dataset manifests: a TOML file that names the CSV file, declares the kind
//! of every feature column and says which column is the target.
//!
//! ```toml
//! name = "adult"
//! data = "adult.csv"
//! target = "class"
//! task = "classification"
//! positive_class = ">50K"
//!
//! [[columns]]
//! name = "age"
//! kind = "numeric"
//!
//! [[columns]]
//! name = "workclass"
//! kind = "categorical"
//! levels = ["Private", "State-gov"]   # optional
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::csv::{load_csv, ColumnSpec, LoadedCsv, TargetKindSpec, TargetSpec};
use super::dataset::{Dataset, Targets};
use super::encode::{min_max_scale, one_hot_encode, MinMax};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    /// CSV path, relative to the manifest's directory unless absolute.
    pub data: PathBuf,
    pub target: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_class: Option<String>,
    /// Min-max scale a regression target onto [0, 1] after loading.
    #[serde(default)]
    pub scale_target: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rows: Option<usize>,
    pub columns: Vec<ColumnSpec>,
}

/// A manifest's dataset after loading and encoding.
#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub dropped_rows: usize,
    /// Rows before any were dropped.
    pub raw_rows: usize,
    pub target_scaling: Option<MinMax>,
    pub positive_class: Option<usize>,
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::from_toml(&text)?;
        if m.data.is_relative() {
            if let Some(dir) = path.parent() {
                m.data = dir.join(&m.data);
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::format("manifest", "no feature columns"));
        }
        if self.columns.iter().any(|c| c.name == self.target) {
            return Err(Error::format("manifest", "target column listed as a feature"));
        }
        if self.scale_target && self.task != Task::Regression {
            return Err(Error::format("manifest", "scale_target applies to regression only"));
        }
        Ok(())
    }

    pub fn target_spec(&self) -> TargetSpec {
        TargetSpec {
            column: self.target.clone(),
            kind: match self.task {
                Task::Classification => TargetKindSpec::Classification {
                    classes: self.classes.clone(),
                },
                Task::Regression => TargetKindSpec::Regression,
            },
        }
    }

    /// Loads the CSV, one-hot encodes categoricals and, when requested,
    /// scales the regression target.
    pub fn prepare(&self) -> Result<PreparedDataset> {
        let LoadedCsv { dataset, dropped_rows } = load_csv(&self.data, &self.columns, Some(&self.target_spec()))?;
        let raw_rows = dataset.n_rows() + dropped_rows;
        let mut dataset = one_hot_encode(&dataset)?;
        let mut target_scaling = None;
        if self.scale_target {
            let (scaled, mm) = min_max_scale(dataset.continuous()?)?;
            dataset = dataset.with_targets(Targets::Continuous(scaled))?;
            target_scaling = Some(mm);
        }
        let positive_class = match &self.positive_class {
            None => None,
            Some(name) => Some(
                dataset
                    .class_names()
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::invalid(format!("positive class `{name}` not among the labels")))?,
            ),
        };
        Ok(PreparedDataset {
            dataset,
            dropped_rows,
            raw_rows,
            target_scaling,
            positive_class,
        })
    }
}
