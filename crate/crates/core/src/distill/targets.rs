use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, Targets};
use crate::error::{Error, Result};

/// What a target matrix holds; also the leaf-value semantics of a tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// One-hot class indicators.
    Hard,
    /// Row-stochastic class probabilities.
    Soft,
    /// Unnormalized teacher logits.
    Logits,
    /// A single real-valued column.
    Continuous,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Hard => "hard",
            TargetKind::Soft => "soft",
            TargetKind::Logits => "logits",
            TargetKind::Continuous => "continuous",
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(TargetKind::Hard),
            "soft" => Ok(TargetKind::Soft),
            "logits" => Ok(TargetKind::Logits),
            "continuous" => Ok(TargetKind::Continuous),
            _ => Err(Error::invalid(format!("unknown target kind {s:?}"))),
        }
    }
}

/// Where a target set or weight vector came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub temperature: Option<f64>,
    pub alpha: Option<f64>,
    /// Teacher fingerprint.
    pub teacher: Option<String>,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn method(name: impl Into<String>) -> Self {
        Self {
            method: name.into(),
            ..Self::default()
        }
    }

    fn header_line(&self, kind: &str) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        format!(
            "# method={},kind={kind},T={},alpha={},teacher={},seed={}",
            self.method,
            opt(&self.temperature),
            opt(&self.alpha),
            opt(&self.teacher),
            opt(&self.seed)
        )
    }

    /// Parses a header line, returning the provenance and the `kind` entry.
    fn parse_header(line: &str) -> Result<(Self, String)> {
        let bad = |r: String| Error::format("target csv", r);
        let body = line
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| bad("missing provenance line".into()))?;
        let mut p = Provenance::default();
        let mut kind = None;
        for field in body.split(',') {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("malformed field {field:?}")))?;
            let num = |v: &str| -> Result<Option<f64>> {
                if v.is_empty() {
                    return Ok(None);
                }
                let x: f64 = v.parse().map_err(|_| bad(format!("bad number {v:?}")))?;
                Ok(Some(x))
            };
            match k {
                "method" => p.method = v.to_string(),
                "kind" => kind = Some(v.to_string()),
                "T" => p.temperature = num(v)?,
                "alpha" => p.alpha = num(v)?,
                "teacher" => p.teacher = (!v.is_empty()).then(|| v.to_string()),
                "seed" => {
                    p.seed = if v.is_empty() {
                        None
                    } else {
                        Some(v.parse().map_err(|_| bad(format!("bad seed {v:?}")))?)
                    }
                }
                _ => return Err(bad(format!("unknown field {k:?}"))),
            }
        }
        let kind = kind.ok_or_else(|| bad("missing kind".into()))?;
        Ok((p, kind))
    }
}

/// Student training targets: an `N × K` matrix (`K = 1` for continuous).
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    kind: TargetKind,
    values: Array2<f64>,
    provenance: Provenance,
}

const STOCHASTIC_TOL: f64 = 1e-9;

impl TargetSet {
    pub fn new(kind: TargetKind, values: Array2<f64>, provenance: Provenance) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("target values must be finite"));
        }
        match kind {
            TargetKind::Hard => {
                for (i, row) in values.rows().into_iter().enumerate() {
                    let ones = row.iter().filter(|&&v| v == 1.0).count();
                    let zeros = row.iter().filter(|&&v| v == 0.0).count();
                    if ones != 1 || zeros + 1 != row.len() {
                        return Err(Error::invalid(format!("hard target row {i} is not one-hot")));
                    }
                }
            }
            TargetKind::Soft => {
                for (i, row) in values.rows().into_iter().enumerate() {
                    if row.iter().any(|&v| v < 0.0) || (row.sum() - 1.0).abs() > STOCHASTIC_TOL {
                        return Err(Error::invalid(format!("soft target row {i} is not a distribution")));
                    }
                }
            }
            TargetKind::Continuous if values.ncols() != 1 => {
                return Err(Error::invalid("continuous targets must have one column"));
            }
            _ => {}
        }
        Ok(Self {
            kind,
            values,
            provenance,
        })
    }

    /// The dataset's own labels: one-hot for classes, one column for values.
    pub fn from_dataset(d: &Dataset) -> Result<Self> {
        match d.targets() {
            Some(Targets::Classes(c)) => {
                let mut v = Array2::zeros((c.len(), d.num_classes()));
                for (i, &k) in c.iter().enumerate() {
                    v[[i, k]] = 1.0;
                }
                Self::new(TargetKind::Hard, v, Provenance::method("hard"))
            }
            Some(Targets::Continuous(y)) => Self::new(
                TargetKind::Continuous,
                Array2::from_shape_vec((y.len(), 1), y.clone()).expect("shape matches"),
                Provenance::method("continuous"),
            ),
            None => Err(Error::invalid("dataset has no targets")),
        }
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::io("<target csv>", e);
        writeln!(w, "{}", self.provenance.header_line(self.kind.as_str())).map_err(io)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record((0..self.n_cols()).map(|k| format!("t{k}")))?;
        for row in self.values.rows() {
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
        out.flush().map_err(io)?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    /// Reads the format written by [`write_csv`](Self::write_csv); invariants
    /// are checked as in [`new`](Self::new).
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (provenance, kind, rows, width) = read_provenance_csv(r)?;
        let kind: TargetKind = kind.parse()?;
        let n = rows.len() / width.max(1);
        let values = Array2::from_shape_vec((n, width), rows).map_err(|e| Error::format("target csv", e.to_string()))?;
        Self::new(kind, values, provenance)
    }
}

fn read_provenance_csv<R: Read>(r: R) -> Result<(Provenance, String, Vec<f64>, usize)> {
    let bad = |s: String| Error::format("target csv", s);
    let mut reader = BufReader::new(r);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| bad(e.to_string()))?;
    let (provenance, kind) = Provenance::parse_header(&first)?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let width = csv.headers()?.len();
    if width == 0 {
        return Err(bad("no columns".into()));
    }
    let mut values = Vec::new();
    for rec in csv.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(bad("ragged row".into()));
        }
        for cell in rec.iter() {
            values.push(cell.trim().parse::<f64>().map_err(|_| bad(format!("bad number {cell:?}")))?);
        }
    }
    Ok((provenance, kind, values, width))
}

/// Nonnegative per-row training weights, at least one positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if !w.iter().any(|&v| v > 0.0) {
            return Err(Error::invalid("at least one weight must be positive"));
        }
        Ok(Self(w))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn to_csv(&self, provenance: &Provenance) -> String {
        let mut s = provenance.header_line("weights");
        s.push_str("\nweight\n");
        for v in &self.0 {
            s.push_str(&v.to_string());
            s.push('\n');
        }
        s
    }

    pub fn read_csv<R: Read>(r: R) -> Result<(Self, Provenance)> {
        let (provenance, kind, values, width) = read_provenance_csv(r)?;
        if kind != "weights" || width != 1 {
            return Err(Error::format("weights csv", "expected a single weight column"));
        }
        Ok((Self::new(values)?, provenance))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn prov() -> Provenance {
        Provenance {
            method: "label_smoothing".into(),
            temperature: Some(5.0),
            alpha: None,
            teacher: Some("00ff12ab".into()),
            seed: Some(7),
        }
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(TargetSet::new(TargetKind::Soft, array![[0.3, 0.7]], prov()).is_ok());
        assert!(TargetSet::new(TargetKind::Soft, array![[0.3, 0.6]], prov()).is_err());
        assert!(TargetSet::new(TargetKind::Soft, array![[1.2, -0.2]], prov()).is_err());
        assert!(TargetSet::new(TargetKind::Hard, array![[0.0, 1.0]], prov()).is_ok());
        assert!(TargetSet::new(TargetKind::Hard, array![[0.5, 0.5]], prov()).is_err());
        assert!(TargetSet::new(TargetKind::Logits, array![[-30.0, 4.0]], prov()).is_ok());
        assert!(TargetSet::new(TargetKind::Logits, array![[f64::NAN, 4.0]], prov()).is_err());
        assert!(TargetSet::new(TargetKind::Continuous, array![[1.0, 2.0]], prov()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = TargetSet::new(TargetKind::Soft, array![[0.1, 0.9], [1.0 / 3.0, 2.0 / 3.0]], prov()).unwrap();
        let text = t.to_csv();
        assert!(text.starts_with("# method=label_smoothing,kind=soft,T=5,alpha=,teacher=00ff12ab,seed=7\n"));
        assert_eq!(TargetSet::read_csv(text.as_bytes()).unwrap(), t);
    }

    #[test]
    fn weights_round_trip() {
        let w = SampleWeights::new(vec![0.5, 1.5, 1.0]).unwrap();
        let p = Provenance::method("profweight");
        let (back, bp) = SampleWeights::read_csv(w.to_csv(&p).as_bytes()).unwrap();
        assert_eq!(back, w);
        assert_eq!(bp, p);
        assert!(SampleWeights::new(vec![0.0, 0.0]).is_err());
        assert!(SampleWeights::new(vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(TargetSet::read_csv("t0\n1\n".as_bytes()).is_err());
        assert!(TargetSet::read_csv("# method=x,kind=soft\nt0,t1\n0.5\n".as_bytes()).is_err());
        assert!(TargetSet::read_csv("# method=x,kind=bogus\nt0\n1\n".as_bytes()).is_err());
        assert!(TargetSet::read_csv("# method=x,kind=soft,seed=-1\nt0\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn from_dataset_one_hot() {
        let d = Dataset::from_matrix(array![[0.0], [1.0]], Some(Targets::Classes(vec![2, 0])), 3).unwrap();
        let t = TargetSet::from_dataset(&d).unwrap();
        assert_eq!(t.values(), array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]);
    }
}
