use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::Format;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERIC: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_IO: u8 = 74;

#[derive(Debug)]
pub enum CliError {
    /// Bad flag values or combinations.
    Usage(String),
    /// The model file is unreadable or invalid.
    Validation(String),
    /// An analysis failed.
    Numeric(String),
    /// Outputs could not be written.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "invalid model: {m}"),
            CliError::Numeric(m) => write!(f, "analysis failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<csq_core::Error> for CliError {
    fn from(e: csq_core::Error) -> Self {
        match e {
            csq_core::Error::InvalidModel(v) => {
                let list: Vec<String> = v.iter().map(ToString::to_string).collect();
                CliError::Validation(list.join("; "))
            }
            csq_core::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// A CSV table: header plus rows of already formatted cells.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn to_csv(&self) -> CliResult<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row).map_err(err)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Formats a class-indexed series `prefix_1, ..., prefix_K`.
pub fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}_{i}")).collect()
}

/// Shortest round-trip text, in exponent form outside [1e-4, 1e15).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn cells<'a>(values: impl IntoIterator<Item = &'a f64>) -> Vec<String> {
    values.into_iter().map(|&v| num(v)).collect()
}

/// What a subcommand produced.
pub struct Report {
    pub summary: Value,
    pub table: Table,
    /// Failure to report after the outputs are written.
    pub failure: Option<CliError>,
    /// Extra files the subcommand wrote itself.
    pub extra_outputs: Vec<PathBuf>,
}

impl Report {
    pub fn new(summary: Value, table: Table) -> Self {
        Self { summary, table, failure: None, extra_outputs: Vec::new() }
    }
}

#[derive(Serialize)]
struct ModelDigest<'a> {
    path: &'a Path,
    sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Serialize)]
pub struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    arguments: &'a [String],
    model: ModelDigest<'a>,
    seed: Option<u64>,
    outputs: Vec<PathBuf>,
}

impl<'a> RunManifest<'a> {
    pub fn new(subcommand: &'a str, arguments: &'a [String], model_path: &'a Path, model_bytes: &[u8], seed: Option<u64>) -> Self {
        let digest = Sha256::digest(model_bytes);
        Self {
            tool: "csq",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            arguments,
            model: ModelDigest { path: model_path, sha256: digest.iter().map(|b| format!("{b:02x}")).collect() },
            seed,
            outputs: Vec::new(),
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut text = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push(b'\n');
    Ok(text)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Prints the report and, with an output directory, writes the JSON summary,
/// the CSV table and the manifest there. Without one the manifest goes to
/// standard error.
pub fn emit(report: &Report, format: Format, output_dir: Option<&Path>, mut manifest: RunManifest<'_>) -> CliResult<()> {
    let json = pretty(&report.summary)?;
    let csv = report.table.to_csv()?;
    manifest.outputs.extend(report.extra_outputs.iter().cloned());
    if let Some(dir) = output_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let json_path = dir.join(format!("{}.json", manifest.subcommand));
        let csv_path = dir.join(format!("{}.csv", manifest.subcommand));
        write_file(&json_path, &json)?;
        write_file(&csv_path, &csv)?;
        manifest.outputs.insert(0, csv_path);
        manifest.outputs.insert(0, json_path);
        write_file(&dir.join("manifest.json"), &pretty(&manifest)?)?;
    } else {
        let line = serde_json::to_string(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        eprintln!("manifest: {line}");
    }
    let mut out = io::stdout().lock();
    let bytes = match format {
        Format::Json => &json,
        Format::Csv => &csv,
    };
    out.write_all(bytes).and_then(|()| out.flush()).map_err(|e| CliError::Io(e.to_string()))
}
