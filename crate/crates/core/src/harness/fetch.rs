use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{arff_to_csv, ArffType, ColumnSpec, Manifest, Task};
use crate::error::{Error, Result};

/// Environment variable naming the dataset cache directory.
pub const CACHE_ENV: &str = "TABDISTILL_CACHE";

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const DATA_FILE: &str = "data.csv";
/// Records the source URLs and the SHA-256 of every written file.
pub const SOURCES_FILE: &str = "sources.json";

/// Published size of a benchmark dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expected {
    pub instances: usize,
    pub features: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct Remote {
    pub url: &'static str,
    pub file: &'static str,
}

#[derive(Clone, Copy, Debug)]
pub struct KnownDataset {
    pub name: &'static str,
    pub expected: Expected,
    pub sources: &'static [Remote],
}

pub const KNOWN: [KnownDataset; 4] = [
    KnownDataset {
        name: "adult",
        expected: Expected {
            instances: 48_842,
            features: 14,
        },
        sources: &[
            Remote {
                url: "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.data",
                file: "adult.data",
            },
            Remote {
                url: "https://archive.ics.uci.edu/ml/machine-learning-databases/adult/adult.test",
                file: "adult.test",
            },
        ],
    },
    KnownDataset {
        name: "connect4",
        expected: Expected {
            instances: 67_557,
            features: 42,
        },
        sources: &[Remote {
            url: "https://www.openml.org/data/download/4965243/connect-4.arff",
            file: "connect-4.arff",
        }],
    },
    KnownDataset {
        name: "mnist",
        expected: Expected {
            instances: 70_000,
            features: 784,
        },
        sources: &[Remote {
            url: "https://www.openml.org/data/download/52667/mnist_784.arff",
            file: "mnist_784.arff",
        }],
    },
    KnownDataset {
        name: "sgemm",
        expected: Expected {
            instances: 241_600,
            features: 14,
        },
        sources: &[Remote {
            url: "https://archive.ics.uci.edu/ml/machine-learning-databases/00440/sgemm_product_dataset.zip",
            file: "sgemm_product_dataset.zip",
        }],
    },
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub url: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourcesFile {
    pub sources: Vec<SourceRecord>,
    pub data_sha256: String,
    pub rows: usize,
}

/// Result of [`fetch_dataset`].
#[derive(Clone, Debug)]
pub struct Fetched {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    /// False when the cache already held the dataset.
    pub downloaded: bool,
}

pub fn known(name: &str) -> Result<&'static KnownDataset> {
    KNOWN.iter().find(|k| k.name == name).ok_or_else(|| {
        let names: Vec<&str> = KNOWN.iter().map(|k| k.name).collect();
        Error::invalid(format!("unknown dataset `{name}`; expected one of {}", names.join(", ")))
    })
}

/// `$TABDISTILL_CACHE`, else `$HOME/.cache/tabdistill`, else `./.tabdistill-cache`.
pub fn cache_dir() -> PathBuf {
    if let Some(d) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(d);
    }
    match std::env::var_os("HOME") {
        Some(h) => PathBuf::from(h).join(".cache").join("tabdistill"),
        None => PathBuf::from(".tabdistill-cache"),
    }
}

/// Manifest path of a fetched dataset in the default cache.
pub fn cached_manifest(name: &str) -> Result<PathBuf> {
    let p = cache_dir().join(name).join(MANIFEST_FILE);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::invalid(format!(
            "dataset `{name}` is not cached at {}; run `tabdistill fetch {name}`",
            p.display()
        )))
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Checks a cached copy against its recorded checksum; no network access.
fn cache_hit(dir: &Path) -> Result<Option<Fetched>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let sources_path = dir.join(SOURCES_FILE);
    if !manifest_path.is_file() || !sources_path.is_file() {
        return Ok(None);
    }
    let manifest = Manifest::load(&manifest_path)?;
    let text = std::fs::read_to_string(&sources_path).map_err(|e| Error::io(&sources_path, e))?;
    let sources: SourcesFile = serde_json::from_str(&text).map_err(|e| Error::format("sources file", e.to_string()))?;
    let actual = sha256_file(&manifest.data)?;
    if actual != sources.data_sha256 {
        return Err(Error::Verification(format!(
            "checksum mismatch for {}: recorded {}, found {actual}",
            manifest.data.display(),
            sources.data_sha256
        )));
    }
    Ok(Some(Fetched {
        manifest_path,
        manifest,
        downloaded: false,
    }))
}

fn download(url: &str, dest: &Path) -> Result<()> {
    if dest.is_file() {
        log::info!("reusing {}", dest.display());
        return Ok(());
    }
    log::info!("downloading {url}");
    let fail = |reason: String| Error::Download {
        url: url.to_string(),
        reason,
    };
    let resp = ureq::AgentBuilder::new()
        .timeout_connect(Duration::from_secs(30))
        .timeout_read(Duration::from_secs(300))
        .build()
        .get(url)
        .call()
        .map_err(|e| fail(e.to_string()))?;
    let tmp = dest.with_extension("part");
    let mut out = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    std::io::copy(&mut resp.into_reader(), &mut out).map_err(|e| fail(e.to_string()))?;
    out.flush().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, dest).map_err(|e| Error::io(dest, e))
}

/// Downloads, converts and verifies one of the benchmark datasets into
/// `cache_dir/<name>/`. A verified cached copy is returned without network
/// access.
pub fn fetch_dataset(name: &str, cache_dir: &Path) -> Result<Fetched> {
    let spec = known(name)?;
    let dir = cache_dir.join(name);
    if let Some(hit) = cache_hit(&dir)? {
        return Ok(hit);
    }
    let raw = dir.join("raw");
    std::fs::create_dir_all(&raw).map_err(|e| Error::io(&raw, e))?;
    let mut records = Vec::new();
    for s in spec.sources {
        let dest = raw.join(s.file);
        download(s.url, &dest)?;
        records.push(SourceRecord {
            url: s.url.to_string(),
            sha256: sha256_file(&dest)?,
        });
    }
    convert(name, &raw, &dir)
        .and_then(|c| finalize(spec, &dir, c, records))
        .map(|(manifest_path, manifest)| Fetched {
            manifest_path,
            manifest,
            downloaded: true,
        })
}

/// Output of a converter, before verification.
pub struct Converted {
    pub manifest: Manifest,
    pub rows: usize,
}

/// Turns the raw files of `name` under `raw` into `dir/data.csv` and a
/// manifest. Public so converted caches can be rebuilt offline.
pub fn convert(name: &str, raw: &Path, dir: &Path) -> Result<Converted> {
    let data = dir.join(DATA_FILE);
    let out = BufWriter::new(File::create(&data).map_err(|e| Error::io(&data, e))?);
    match name {
        "adult" => {
            let train = open(&raw.join("adult.data"))?;
            let test = open(&raw.join("adult.test"))?;
            convert_adult(train, test, out)
        }
        "connect4" => convert_arff(open(&raw.join("connect-4.arff"))?, out, "connect4", "class", false),
        "mnist" => convert_arff(open(&raw.join("mnist_784.arff"))?, out, "mnist", "class", true),
        "sgemm" => {
            let zip_path = raw.join("sgemm_product_dataset.zip");
            let f = File::open(&zip_path).map_err(|e| Error::io(&zip_path, e))?;
            let mut archive = zip::ZipArchive::new(f).map_err(|e| Error::format("zip", e.to_string()))?;
            let member = archive
                .by_name("sgemm_product.csv")
                .map_err(|e| Error::format("zip", e.to_string()))?;
            convert_sgemm(BufReader::new(member), out)
        }
        _ => Err(known(name).err().unwrap_or_else(|| Error::invalid(format!("no converter for `{name}`")))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn finalize(spec: &KnownDataset, dir: &Path, c: Converted, sources: Vec<SourceRecord>) -> Result<(PathBuf, Manifest)> {
    verify(spec, &c)?;
    let data = dir.join(DATA_FILE);
    let record = SourcesFile {
        sources,
        data_sha256: sha256_file(&data)?,
        rows: c.rows,
    };
    let sources_path = dir.join(SOURCES_FILE);
    std::fs::write(&sources_path, serde_json::to_string_pretty(&record).expect("sources serialize"))
        .map_err(|e| Error::io(&sources_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, c.manifest.to_toml()).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = Manifest::load(&manifest_path)?;
    Ok((manifest_path, manifest))
}

/// Row and feature counts against the published dataset dimensions.
pub fn verify(spec: &KnownDataset, c: &Converted) -> Result<()> {
    let features = c.manifest.columns.len();
    if c.rows != spec.expected.instances || features != spec.expected.features {
        return Err(Error::Verification(format!(
            "{}: expected {} instances and {} features, found {} and {}",
            spec.name, spec.expected.instances, spec.expected.features, c.rows, features
        )));
    }
    Ok(())
}

const ADULT_COLUMNS: [(&str, bool); 14] = [
    ("age", false),
    ("workclass", true),
    ("fnlwgt", false),
    ("education", true),
    ("education-num", false),
    ("marital-status", true),
    ("occupation", true),
    ("relationship", true),
    ("race", true),
    ("sex", true),
    ("capital-gain", false),
    ("capital-loss", false),
    ("hours-per-week", false),
    ("native-country", true),
];

/// Joins the UCI train and test files. The test file's label carries a
/// trailing period and its first line is a comment.
pub fn convert_adult<R1: BufRead, R2: BufRead, W: Write>(train: R1, test: R2, w: W) -> Result<Converted> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = ADULT_COLUMNS.iter().map(|(n, _)| *n).collect();
    header.push("income");
    out.write_record(&header)?;
    let mut rows = 0;
    for reader in [Box::new(train) as Box<dyn BufRead>, Box::new(test)] {
        for line in reader.lines() {
            let line = line.map_err(|e| Error::format("adult", e.to_string()))?;
            let l = line.trim();
            if l.is_empty() || l.starts_with('|') {
                continue;
            }
            let mut cells: Vec<String> = l.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != 15 {
                return Err(Error::format("adult", format!("expected 15 fields, found {}", cells.len())));
            }
            let label = cells[14].trim_end_matches('.').to_string();
            if label != "<=50K" && label != ">50K" {
                return Err(Error::format("adult", format!("unknown label `{label}`")));
            }
            cells[14] = label;
            out.write_record(&cells)?;
            rows += 1;
        }
    }
    out.flush().map_err(|e| Error::format("adult", e.to_string()))?;
    let columns = ADULT_COLUMNS
        .iter()
        .map(|&(n, cat)| if cat { ColumnSpec::categorical(n, None) } else { ColumnSpec::numeric(n) })
        .collect();
    Ok(Converted {
        manifest: Manifest {
            name: "adult".into(),
            data: DATA_FILE.into(),
            target: "income".into(),
            task: Task::Classification,
            classes: Some(vec!["<=50K".into(), ">50K".into()]),
            positive_class: Some(">50K".into()),
            scale_target: false,
            expected_rows: Some(rows),
            columns,
        },
        rows,
    })
}

/// Generic ARFF conversion with `target` as the class attribute. With
/// `unit_scale`, numeric features are divided by 255.
pub fn convert_arff<R: BufRead, W: Write>(r: R, w: W, name: &str, target: &str, unit_scale: bool) -> Result<Converted> {
    let (header, rows) = arff_to_csv(r, w, |a, v| match (unit_scale && a.name != target, v.parse::<f64>()) {
        (true, Ok(x)) => format!("{}", x / 255.0),
        _ => v.to_string(),
    })?;
    let Some(t) = header.attributes.iter().position(|a| a.name == target) else {
        return Err(Error::format("arff", format!("no `{target}` attribute")));
    };
    let classes = match &header.attributes[t].kind {
        ArffType::Nominal(levels) => levels.clone(),
        _ => return Err(Error::format("arff", format!("`{target}` is not nominal"))),
    };
    let mut columns = Vec::with_capacity(header.attributes.len() - 1);
    for (j, a) in header.attributes.iter().enumerate() {
        if j == t {
            continue;
        }
        columns.push(match &a.kind {
            ArffType::Numeric => ColumnSpec::numeric(&a.name),
            ArffType::Nominal(levels) => ColumnSpec::categorical(&a.name, Some(levels.clone())),
            _ => return Err(Error::format("arff", format!("unsupported feature type for `{}`", a.name))),
        });
    }
    Ok(Converted {
        manifest: Manifest {
            name: name.into(),
            data: DATA_FILE.into(),
            target: target.into(),
            task: Task::Classification,
            classes: Some(classes),
            positive_class: None,
            scale_target: false,
            expected_rows: Some(rows),
            columns,
        },
        rows,
    })
}

/// Keeps the 14 kernel parameters and replaces the four timing columns
/// by their mean, the min-max scaled regression target.
pub fn convert_sgemm<R: Read, W: Write>(r: R, w: W) -> Result<Converted> {
    let mut input = csv::Reader::from_reader(r);
    let headers = input.headers()?.clone();
    let runs: Vec<usize> = (0..headers.len()).filter(|&j| headers[j].starts_with("Run")).collect();
    if runs.len() != 4 {
        return Err(Error::format("sgemm", format!("expected 4 timing columns, found {}", runs.len())));
    }
    let params: Vec<usize> = (0..headers.len()).filter(|j| !runs.contains(j)).collect();
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = params.iter().map(|&j| &headers[j]).collect();
    header.push("runtime");
    out.write_record(&header)?;
    let mut rows = 0;
    for rec in input.records() {
        let rec = rec?;
        let mut total = 0.0;
        for &j in &runs {
            let v: f64 = rec[j]
                .trim()
                .parse()
                .map_err(|_| Error::format("sgemm", format!("bad timing `{}`", &rec[j])))?;
            total += v;
        }
        let mut cells: Vec<String> = params.iter().map(|&j| rec[j].trim().to_string()).collect();
        cells.push(format!("{}", total / 4.0));
        out.write_record(&cells)?;
        rows += 1;
    }
    out.flush().map_err(|e| Error::format("sgemm", e.to_string()))?;
    Ok(Converted {
        manifest: Manifest {
            name: "sgemm".into(),
            data: DATA_FILE.into(),
            target: "runtime".into(),
            task: Task::Regression,
            classes: None,
            positive_class: None,
            scale_target: true,
            expected_rows: Some(rows),
            columns: params.iter().map(|&j| ColumnSpec::numeric(&headers[j])).collect(),
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adult_joins_and_strips_periods() {
        let train = "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, United-States, <=50K\n\n";
        let test = "|1x3 Cross validator\n25, Private, 226802, 11th, 7, Never-married, Machine-op-inspct, Own-child, Black, Male, 0, 0, 40, ?, >50K.\n";
        let mut buf = Vec::new();
        let c = convert_adult(train.as_bytes(), test.as_bytes(), &mut buf).unwrap();
        assert_eq!(c.rows, 2);
        assert_eq!(c.manifest.columns.len(), 14);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with(",?,>50K"));
        assert!(convert_adult("1, 2\n".as_bytes(), "".as_bytes(), Vec::new()).is_err());
    }

    #[test]
    fn sgemm_averages_four_runs() {
        let src = "MWG,NWG,Run1 (ms),Run2 (ms),Run3 (ms),Run4 (ms)\n16,32,1.0,2.0,3.0,4.0\n";
        let mut buf = Vec::new();
        let c = convert_sgemm(src.as_bytes(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "MWG,NWG,runtime\n16,32,2.5\n");
        assert_eq!(c.manifest.columns.len(), 2);
        assert!(c.manifest.scale_target);
        assert!(convert_sgemm("a,Run1\n1,2\n".as_bytes(), Vec::new()).is_err());
    }

    #[test]
    fn arff_scaling_skips_the_target() {
        let src = "@relation m\n@attribute p1 numeric\n@attribute class {0,1}\n@data\n255,1\n51,0\n";
        let mut buf = Vec::new();
        let c = convert_arff(src.as_bytes(), &mut buf, "m", "class", true).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "p1,class\n1,1\n0.2,0\n");
        assert_eq!(c.manifest.classes, Some(vec!["0".into(), "1".into()]));
    }

    #[test]
    fn counts_are_verified() {
        let spec = known("sgemm").unwrap();
        let mut buf = Vec::new();
        let c = convert_sgemm("A,Run1,Run2,Run3,Run4\n1,1,1,1,1\n".as_bytes(), &mut buf).unwrap();
        let err = verify(spec, &c).unwrap_err().to_string();
        assert!(err.contains("241600"), "{err}");
        assert!(known("iris").is_err());
    }

    #[test]
    fn cache_hit_needs_no_network() {
        let dir = tempfile::tempdir().unwrap();
        let ds = dir.path().join("sgemm");
        std::fs::create_dir_all(&ds).unwrap();
        let mut data = Vec::new();
        let c = convert_sgemm("A,Run1,Run2,Run3,Run4\n1,1,1,1,1\n2,3,3,3,3\n".as_bytes(), &mut data).unwrap();
        std::fs::write(ds.join(DATA_FILE), &data).unwrap();
        std::fs::write(ds.join(MANIFEST_FILE), c.manifest.to_toml()).unwrap();
        let record = SourcesFile {
            sources: vec![],
            data_sha256: sha256_file(&ds.join(DATA_FILE)).unwrap(),
            rows: 2,
        };
        std::fs::write(ds.join(SOURCES_FILE), serde_json::to_string(&record).unwrap()).unwrap();
        // no raw files exist, so any download attempt would fail
        let f = fetch_dataset("sgemm", dir.path()).unwrap();
        assert!(!f.downloaded);
        assert_eq!(f.manifest.prepare().unwrap().dataset.n_rows(), 2);

        std::fs::write(ds.join(DATA_FILE), b"A,runtime\n9,9\n").unwrap();
        assert!(matches!(fetch_dataset("sgemm", dir.path()), Err(Error::Verification(_))));
    }
}
