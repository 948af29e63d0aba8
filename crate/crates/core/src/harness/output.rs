use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floats in metric files: 17 significant digits, so files round-trip and
/// compare byte for byte.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRef {
    pub space: String,
    pub path: PathBuf,
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowFilter {
    pub column: String,
    pub value: String,
}

/// Where a plottable series lives inside a run's files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesRef {
    pub file: String,
    /// Absent for series aggregated over seeds.
    #[serde(default)]
    pub seed_column: Option<String>,
    pub t_column: String,
    pub value_column: String,
    #[serde(default)]
    pub filter: Option<RowFilter>,
}

impl SeriesRef {
    pub fn per_seed(file: &str, value: &str) -> Self {
        SeriesRef {
            file: file.into(),
            seed_column: Some("seed".into()),
            t_column: "t".into(),
            value_column: value.into(),
            filter: None,
        }
    }

    pub fn aggregate(file: &str, value: &str) -> Self {
        SeriesRef {
            file: file.into(),
            seed_column: None,
            t_column: "t".into(),
            value_column: value.into(),
            filter: None,
        }
    }

    pub fn filtered(mut self, column: &str, value: String) -> Self {
        self.filter = Some(RowFilter {
            column: column.into(),
            value,
        });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub artifact_version: String,
    /// SHA-256 of the resolved configuration.
    pub config_hash: String,
    pub master_seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub input_tables: Vec<TableRef>,
    /// Files written, relative to the run directory.
    pub outputs: Vec<String>,
    pub series: BTreeMap<String, SeriesRef>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// A run directory that remembers what it wrote.
pub(crate) struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.note(name);
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        if name != MANIFEST_FILE {
            self.note(name);
        }
        Ok(())
    }

    fn note(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }
}

/// Writes one series of a finished run as long-format `series,seed,t,value`
/// rows. Aggregate series get the seed `aggregate`. Returns the output path,
/// which defaults to `plot-<series>.csv` beside the manifest.
pub fn emit_plot_data(manifest_path: &Path, series: &str, out: Option<&Path>) -> Result<PathBuf> {
    let manifest = load_manifest(manifest_path)?;
    let spec = manifest.series.get(series).ok_or_else(|| Error::UnknownSeries {
        name: series.to_string(),
        available: manifest.series.keys().cloned().collect::<Vec<_>>().join(", "),
    })?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(dir.join(&spec.file))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{} has no column {name:?}", spec.file)))
    };
    let t_col = column(&spec.t_column)?;
    let v_col = column(&spec.value_column)?;
    let seed_col = spec.seed_column.as_deref().map(column).transpose()?;
    let filter = match &spec.filter {
        Some(f) => Some((column(&f.column)?, f.value.as_str())),
        None => None,
    };

    let safe: String = series
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => dir.join(format!("plot-{safe}.csv")),
    };
    let mut w = csv::Writer::from_path(&target)?;
    w.write_record(["series", "seed", "t", "value"])?;
    for row in reader.records() {
        let row = row?;
        if let Some((c, v)) = filter {
            if &row[c] != v {
                continue;
            }
        }
        if row[v_col].is_empty() {
            continue;
        }
        let seed = seed_col.map(|c| &row[c]).unwrap_or("aggregate");
        w.write_record([series, seed, &row[t_col], &row[v_col]])?;
    }
    w.flush()?;
    Ok(target)
}
