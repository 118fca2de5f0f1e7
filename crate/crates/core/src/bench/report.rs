//! Result files and run manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::experiments::{SweepRecord, SweepResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

pub const CSV_HEADER: [&str; 5] = ["N", "seed", "error", "gram_rms", "wall_ms"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// CSV text of the records; header only for an empty sweep.
pub fn records_to_csv(records: &[SweepRecord], path: &Path) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.into_inner().map_err(|e| Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn json_text(sweep: &SweepResult, path: &Path) -> Result<Vec<u8>> {
    let value = serde_json::json!({
        "metadata": sweep.metadata,
        "partial": sweep.partial,
        "records": sweep.records,
        "summary": sweep.summary(),
    });
    let mut text = serde_json::to_vec_pretty(&value).map_err(|e| Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push(b'\n');
    Ok(text)
}

/// Writes `sweep` to `path`. CSV carries the records only; JSON adds the
/// metadata block and per-`N` summary.
pub fn emit_results(sweep: &SweepResult, format: OutputFormat, path: &Path) -> Result<()> {
    let bytes = match format {
        OutputFormat::Csv => records_to_csv(&sweep.records, path)?,
        OutputFormat::Json => json_text(sweep, path)?,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses a CSV written by [`emit_results`].
pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Serialize {
            path: path.to_path_buf(),
            message: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<SweepRecord>, _>>()
        .map_err(|e| csv_error(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub role: String,
    pub n: usize,
    pub sha256: String,
}

impl DatasetRecord {
    pub fn of(role: &str, ds: &Dataset) -> Self {
        Self {
            role: role.into(),
            n: ds.len(),
            sha256: ds.sha256(),
        }
    }
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// The fully resolved run configuration.
    pub config: serde_json::Value,
    pub datasets: Vec<DatasetRecord>,
    pub results: Option<PathBuf>,
    pub partial: bool,
    /// Error message when the run failed.
    pub failure: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: "speckle-rf".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            datasets: Vec::new(),
            results: None,
            partial: false,
            failure: None,
        }
    }
}

/// `<results>.manifest.json`.
pub fn manifest_path(results: &Path) -> PathBuf {
    let mut s = results.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(manifest).map_err(|e| Error::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push(b'\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
