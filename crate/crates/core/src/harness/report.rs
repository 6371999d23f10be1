use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MethodName, MetricName};
use super::run::SeedOutcome;
use crate::dataio::Task;
use crate::distill::FractionSweep;
use crate::error::{Error, Result};
use crate::metrics::{round_decimal, summarize, Summary};

/// Marker printed for a cell with no successful seed.
pub const MISSING: &str = "—";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherRecord {
    pub seed: u64,
    /// Parameter hash shared by every student of the seed.
    pub fingerprint: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Test-split metrics by name.
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    /// `None` when the stage is shared by all methods of the seed.
    pub method: Option<MethodName>,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSweep {
    pub seed: u64,
    pub sweep: FractionSweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAlphas {
    pub seed: u64,
    /// Tuned mixing weight per report depth.
    pub alphas: Vec<f64>,
}

/// One (method, depth, metric) entry across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: MethodName,
    pub depth: usize,
    pub metric: MetricName,
    /// `None` when every seed failed for this cell.
    pub summary: Option<Summary>,
    /// `(seed, value)` for the seeds that produced one.
    pub values: Vec<(u64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub dataset: String,
    pub task: Task,
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodName>,
    pub depths: Vec<usize>,
    pub metrics: Vec<MetricName>,
    /// Method-major, then depth, then metric.
    pub cells: Vec<Cell>,
    pub teachers: Vec<TeacherRecord>,
    pub teacher_summary: BTreeMap<String, Summary>,
    pub fraction_sweeps: Vec<SeedSweep>,
    pub alphas: Vec<SeedAlphas>,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ExperimentReport {
    /// Deterministic reduce of per-seed outcomes, whatever order they arrive in.
    pub fn assemble(
        config: &ExperimentConfig,
        dataset: &str,
        task: Task,
        metrics: &[MetricName],
        mut outcomes: Vec<SeedOutcome>,
    ) -> Self {
        outcomes.sort_by_key(|o| o.seed);
        let mut depths = config.depths.clone();
        depths.sort_unstable();
        depths.dedup();
        let mut cells = Vec::with_capacity(config.methods.len() * depths.len() * metrics.len());
        for &method in &config.methods {
            for &depth in &depths {
                for &metric in metrics {
                    let values: Vec<(u64, f64)> = outcomes
                        .iter()
                        .flat_map(|o| {
                            o.values
                                .iter()
                                .filter(|c| c.method == method && c.depth == depth && c.metric == metric)
                                .map(|c| (o.seed, c.value))
                        })
                        .collect();
                    let raw: Vec<f64> = values.iter().map(|(_, v)| *v).collect();
                    cells.push(Cell {
                        method,
                        depth,
                        metric,
                        summary: summarize(&raw).ok(),
                        values,
                    });
                }
            }
        }
        let teachers: Vec<TeacherRecord> = outcomes.iter().filter_map(|o| o.teacher.clone()).collect();
        let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for t in &teachers {
            for (k, v) in &t.metrics {
                by_metric.entry(k.clone()).or_default().push(*v);
            }
        }
        let teacher_summary = by_metric
            .into_iter()
            .filter_map(|(k, v)| summarize(&v).ok().map(|s| (k, s)))
            .collect();
        let mut failures: Vec<Failure> = outcomes.iter().flat_map(|o| o.failures.clone()).collect();
        failures.sort_by(|a, b| (a.seed, a.method, &a.stage).cmp(&(b.seed, b.method, &b.stage)));
        Self {
            name: config.name.clone(),
            dataset: dataset.to_string(),
            task,
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seeds: config.seeds.clone(),
            methods: config.methods.clone(),
            depths,
            metrics: metrics.to_vec(),
            cells,
            teachers,
            teacher_summary,
            fraction_sweeps: outcomes
                .iter()
                .filter_map(|o| o.fraction_sweep.clone().map(|sweep| SeedSweep { seed: o.seed, sweep }))
                .collect(),
            alphas: outcomes
                .iter()
                .filter_map(|o| o.alphas.clone().map(|alphas| SeedAlphas { seed: o.seed, alphas }))
                .collect(),
            failures,
        }
    }

    pub fn cell(&self, method: MethodName, depth: usize, metric: MetricName) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.depth == depth && c.metric == metric)
    }

    /// Mean of a cell, if any seed produced it.
    pub fn mean(&self, method: MethodName, depth: usize, metric: MetricName) -> Option<f64> {
        self.cell(method, depth, metric).and_then(|c| c.summary).map(|s| s.mean)
    }

    /// Cells missing at least one seed.
    pub fn incomplete_cells(&self) -> Vec<&Cell> {
        self.cells.iter().filter(|c| c.values.len() < self.seeds.len()).collect()
    }

    /// Pilot error per candidate fraction, summarized over seeds.
    pub fn fraction_summary(&self) -> Vec<(f64, Summary)> {
        let Some(first) = self.fraction_sweeps.first() else {
            return Vec::new();
        };
        first
            .sweep
            .points
            .iter()
            .enumerate()
            .filter_map(|(i, &(f, _))| {
                let errs: Vec<f64> = self
                    .fraction_sweeps
                    .iter()
                    .filter_map(|s| s.sweep.points.get(i).filter(|p| p.0 == f).map(|p| p.1))
                    .collect();
                summarize(&errs).ok().map(|s| (f, s))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::format("report", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// One row per cell with raw, unscaled values.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,depth,metric,mean,std,n\n");
        for c in &self.cells {
            match c.summary {
                Some(sm) => writeln!(s, "{},{},{},{},{},{}", c.method, c.depth, c.metric, sm.mean, sm.std, sm.n),
                None => writeln!(s, "{},{},{},,,0", c.method, c.depth, c.metric),
            }
            .expect("write to string");
        }
        s
    }

    /// Depth-by-method tables of "mean (std)" cells, one per metric.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "# {}\n", self.name);
        let _ = writeln!(
            w,
            "Dataset `{}`, {} seed(s), config `{}`, version {}.\n",
            self.dataset,
            self.seeds.len(),
            self.config_hash,
            self.version
        );
        for &metric in &self.metrics {
            let (factor, decimals, unit) = metric.display();
            let unit = if unit.is_empty() { String::new() } else { format!(" ({unit})") };
            let _ = writeln!(w, "## {metric}{unit}\n");
            let _ = write!(w, "| depth |");
            for m in &self.methods {
                let _ = write!(w, " {m} |");
            }
            let _ = write!(w, "\n|---|");
            for _ in &self.methods {
                let _ = write!(w, "---|");
            }
            let _ = writeln!(w);
            for &depth in &self.depths {
                let _ = write!(w, "| {depth} |");
                for &m in &self.methods {
                    let text = self
                        .cell(m, depth, metric)
                        .and_then(|c| c.summary)
                        .map_or_else(|| MISSING.to_string(), |sm| sm.cell_scaled(factor, decimals));
                    let _ = write!(w, " {text} |");
                }
                let _ = writeln!(w);
            }
            let _ = writeln!(w);
        }
        if !self.teacher_summary.is_empty() {
            let _ = writeln!(w, "## teacher\n\n| metric | test |\n|---|---|");
            for (k, sm) in &self.teacher_summary {
                let (factor, decimals) = k
                    .parse::<MetricName>()
                    .map(|m| (m.display().0, m.display().1))
                    .unwrap_or((1.0, 3));
                let _ = writeln!(w, "| {k} | {} |", sm.cell_scaled(factor, decimals));
            }
            let _ = writeln!(w);
        }
        let fractions = self.fraction_summary();
        if !fractions.is_empty() {
            let _ = writeln!(w, "## fraction selection (pilot validation error)\n\n| added (%) | error |\n|---|---|");
            for (f, sm) in fractions {
                let _ = writeln!(w, "| {} | {} |", round_decimal(f * 100.0, 2), sm.cell_scaled(100.0, 2));
            }
            let _ = writeln!(w);
        }
        if !self.alphas.is_empty() {
            let _ = writeln!(w, "## tuned alpha\n\n| depth | alpha |\n|---|---|");
            for (i, depth) in self.depths.iter().enumerate() {
                let a: Vec<f64> = self.alphas.iter().filter_map(|s| s.alphas.get(i).copied()).collect();
                if let Ok(sm) = summarize(&a) {
                    let _ = writeln!(w, "| {depth} | {} |", sm.cell());
                }
            }
            let _ = writeln!(w);
        }
        if !self.failures.is_empty() {
            let _ = writeln!(w, "## failures\n");
            for f in &self.failures {
                let method = f.method.map(|m| format!(" {m}")).unwrap_or_default();
                let _ = writeln!(w, "- seed {}{method} ({}): {}", f.seed, f.stage, f.message);
            }
        }
        s
    }
}

/// Writes `report.csv` and/or `report.md` into `dir` and returns the paths.
pub fn emit_report(r: &ExperimentReport, dir: impl AsRef<Path>, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(formats.len());
    for f in formats {
        let (name, body) = match f {
            ReportFormat::Csv => ("report.csv", r.to_csv()),
            ReportFormat::Markdown => ("report.md", r.to_markdown()),
        };
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
