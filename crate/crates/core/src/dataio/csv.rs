use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, FeatureKind, FeatureMeta, Targets};
use crate::error::{Error, Result};

/// Schema entry for one feature column of a CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<Vec<String>>,
    },
}

impl ColumnSpec {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Option<Vec<String>>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical { levels },
        }
    }
}

/// Which column holds the target and how to read it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub column: String,
    #[serde(flatten)]
    pub kind: TargetKindSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum TargetKindSpec {
    /// Class ids follow `classes` when given, otherwise the sorted set of
    /// observed label strings.
    Classification {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classes: Option<Vec<String>>,
    },
    Regression,
}

/// Result of [`load_csv`]: the dataset and the number of rows dropped for
/// missing or unparseable cells.
#[derive(Clone, Debug)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "?" || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
}

/// Reads a headered CSV file. Columns not named in `schema` (other than the
/// target) are ignored.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec], target: Option<&TargetSpec>) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    load_csv_reader(file, schema, target)
}

enum Cell {
    Num(f64),
    Level(String),
}

pub fn load_csv_reader<R: Read>(reader: R, schema: &[ColumnSpec], target: Option<&TargetSpec>) -> Result<LoadedCsv> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let cols: Vec<usize> = schema.iter().map(|c| position(&c.name)).collect::<Result<_>>()?;
    let target_col = target.map(|t| position(&t.column)).transpose()?;

    let mut cells: Vec<Vec<Cell>> = Vec::new();
    let mut raw_targets: Vec<String> = Vec::new();
    let mut dropped = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(true) => {}
            Ok(false) => break,
            // A malformed line (bad quoting, invalid UTF-8) is dropped like a
            // row with a missing cell.
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. } | csv::ErrorKind::UnequalLengths { .. }) => {
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        let mut row = Vec::with_capacity(schema.len());
        let mut ok = true;
        for (spec, &c) in schema.iter().zip(&cols) {
            let Some(cell) = record.get(c) else {
                ok = false;
                break;
            };
            if is_missing(cell) {
                ok = false;
                break;
            }
            match spec.kind {
                ColumnKind::Numeric => match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => row.push(Cell::Num(v)),
                    _ => {
                        ok = false;
                        break;
                    }
                },
                ColumnKind::Categorical { .. } => row.push(Cell::Level(cell.to_owned())),
            }
        }
        if ok {
            if let (Some(c), Some(t)) = (target_col, target) {
                match record.get(c) {
                    Some(cell) if !is_missing(cell) => {
                        if matches!(t.kind, TargetKindSpec::Regression)
                            && !cell.parse::<f64>().map(f64::is_finite).unwrap_or(false)
                        {
                            ok = false;
                        } else {
                            raw_targets.push(cell.to_owned());
                        }
                    }
                    _ => ok = false,
                }
            }
        }
        if ok {
            cells.push(row);
        } else {
            dropped += 1;
        }
    }
    if cells.is_empty() {
        return Err(Error::NoUsableRows { dropped });
    }

    let n = cells.len();
    let mut meta = Vec::with_capacity(schema.len());
    let mut features = Array2::<f64>::zeros((n, schema.len()));
    for (j, spec) in schema.iter().enumerate() {
        match &spec.kind {
            ColumnKind::Numeric => {
                for (i, row) in cells.iter().enumerate() {
                    if let Cell::Num(v) = row[j] {
                        features[[i, j]] = v;
                    }
                }
                meta.push(FeatureMeta::numeric(&spec.name));
            }
            ColumnKind::Categorical { levels: declared } => {
                let observed: BTreeSet<&str> = cells
                    .iter()
                    .filter_map(|row| match &row[j] {
                        Cell::Level(s) => Some(s.as_str()),
                        Cell::Num(_) => None,
                    })
                    .collect();
                let levels: Vec<String> = observed.into_iter().map(str::to_owned).collect();
                let code: HashMap<&str, usize> = levels.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
                for (i, row) in cells.iter().enumerate() {
                    if let Cell::Level(s) = &row[j] {
                        features[[i, j]] = code[s.as_str()] as f64;
                    }
                }
                let declared = declared.as_ref().map(|d| {
                    let mut d = d.clone();
                    d.sort();
                    d.dedup();
                    d
                });
                meta.push(FeatureMeta {
                    name: spec.name.clone(),
                    kind: FeatureKind::Categorical { levels, declared },
                });
            }
        }
    }

    let dataset = match target {
        None => Dataset::new(features, meta, None, 0)?,
        Some(TargetSpec {
            kind: TargetKindSpec::Regression,
            ..
        }) => {
            let y = raw_targets.iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)).collect();
            Dataset::new(features, meta, Some(Targets::Continuous(y)), 0)?
        }
        Some(TargetSpec {
            kind: TargetKindSpec::Classification { classes },
            column,
        }) => {
            let names: Vec<String> = match classes {
                Some(c) => c.clone(),
                None => raw_targets
                    .iter()
                    .map(String::as_str)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .map(str::to_owned)
                    .collect(),
            };
            let code: HashMap<&str, usize> = names.iter().enumerate().map(|(k, s)| (s.as_str(), k)).collect();
            let labels = raw_targets
                .iter()
                .map(|s| {
                    code.get(s.as_str()).copied().ok_or_else(|| Error::UnseenLevel {
                        column: column.clone(),
                        level: s.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Dataset::new(features, meta, Some(Targets::Classes(labels)), names.len())?.with_class_names(names)?
        }
    };
    Ok(LoadedCsv {
        dataset,
        dropped_rows: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_target() -> TargetSpec {
        TargetSpec {
            column: "y".into(),
            kind: TargetKindSpec::Classification { classes: None },
        }
    }

    #[test]
    fn three_row_numeric_file() {
        let csv = "a,b,y\n1,2,0\n3,4,1\n5,6,0\n";
        let schema = [ColumnSpec::numeric("a"), ColumnSpec::numeric("b")];
        let out = load_csv_reader(csv.as_bytes(), &schema, Some(&binary_target())).unwrap();
        let d = out.dataset;
        assert_eq!((d.n_rows(), d.n_features(), d.num_classes()), (3, 2, 2));
        assert_eq!(d.classes().unwrap(), &[0, 1, 0]);
        assert_eq!(out.dropped_rows, 0);
    }

    #[test]
    fn question_mark_row_is_dropped() {
        let csv = "a,b,y\n1,?,0\n3,4,1\n5,6,0\nx,1,1\n";
        let schema = [ColumnSpec::numeric("a"), ColumnSpec::numeric("b")];
        let out = load_csv_reader(csv.as_bytes(), &schema, Some(&binary_target())).unwrap();
        assert_eq!(out.dataset.n_rows(), 2);
        assert_eq!(out.dropped_rows, 2);
    }

    #[test]
    fn header_mismatch_and_empty() {
        let schema = [ColumnSpec::numeric("zzz")];
        let err = load_csv_reader("a,y\n1,0\n".as_bytes(), &schema, Some(&binary_target())).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "zzz"));
        let schema = [ColumnSpec::numeric("a")];
        let err = load_csv_reader("a,y\n?,0\n".as_bytes(), &schema, Some(&binary_target())).unwrap_err();
        assert!(matches!(err, Error::NoUsableRows { dropped: 1 }));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &[], None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn categorical_levels_sorted() {
        let csv = "c,y\n z ,a\nx,b\ny,a\n";
        let schema = [ColumnSpec::categorical("c", None)];
        let d = load_csv_reader(csv.as_bytes(), &schema, Some(&binary_target())).unwrap().dataset;
        assert_eq!(d.features().column(0).to_vec(), vec![2.0, 0.0, 1.0]);
        assert_eq!(d.class_names(), &["a".to_string(), "b".to_string()]);
    }
}
