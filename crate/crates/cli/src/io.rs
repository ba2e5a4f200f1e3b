//! File formats: covariate and allocation CSVs, schema TOML, JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use trialdesign::{Allocation, CovariateMatrix64, CovariateSchema, DesignError, Matrix};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Schema { path: PathBuf, source: toml::de::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Design(e) => e.kind(),
            CliError::Io { .. } => "Io",
            CliError::Format { .. } => "Format",
            CliError::Schema { .. } => "Schema",
            CliError::Json(_) => "Json",
            CliError::Threads(_) => "Threads",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn format_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a covariate CSV with a header row. Returns the validated matrix,
/// the column names and the SHA-256 of the file contents.
pub fn read_covariates(path: &Path) -> CliResult<(CovariateMatrix64, Vec<String>, String)> {
    let bytes = read_bytes(path)?;
    let hash = sha256_hex(&bytes);
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| format_error(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| format_error(path, format!("data row {}: {cell:?} is not a number", i + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_error(path, "no data rows"));
    }
    let matrix = Matrix::from_rows(&rows).ok_or(DesignError::NotRectangular)?;
    Ok((CovariateMatrix64::validate(matrix)?, names, hash))
}

pub fn covariates_csv(h: &CovariateMatrix64, names: &[String]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(names).map_err(DesignError::from)?;
    for i in 0..h.n() {
        w.write_record(h.row(i).iter().map(|v| v.to_string()))
            .map_err(DesignError::from)?;
    }
    w.into_inner().map_err(|e| DesignError::Csv(e.to_string()).into())
}

pub fn default_names(p: usize) -> Vec<String> {
    std::iter::once("intercept".to_owned())
        .chain((1..p).map(|k| format!("x{k}")))
        .collect()
}

pub fn allocation_csv(x: &Allocation) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["patient", "treatment"]).map_err(DesignError::from)?;
    for (i, &v) in x.as_slice().iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])
            .map_err(DesignError::from)?;
    }
    w.into_inner().map_err(|e| DesignError::Csv(e.to_string()).into())
}

/// Reads a `patient,treatment` CSV; rows are taken in file order.
pub fn read_allocation(path: &Path) -> CliResult<(Allocation, String)> {
    let bytes = read_bytes(path)?;
    let hash = sha256_hex(&bytes);
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let headers = rdr.headers().map_err(|e| format_error(path, e.to_string()))?.clone();
    let column = headers
        .iter()
        .position(|h| h.trim() == "treatment")
        .ok_or_else(|| format_error(path, "missing `treatment` column"))?;
    let mut x = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        let cell = record.get(column).unwrap_or("").trim();
        let v: i8 = cell
            .parse()
            .map_err(|_| format_error(path, format!("data row {}: {cell:?} is not ±1", i + 1)))?;
        x.push(v);
    }
    Ok((Allocation::new(x)?, hash))
}

pub fn read_schema(path: &Path) -> CliResult<(CovariateSchema, String)> {
    let bytes = read_bytes(path)?;
    let hash = sha256_hex(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| format_error(path, "schema is not UTF-8"))?;
    let schema: CovariateSchema = toml::from_str(&text).map_err(|source| CliError::Schema {
        path: path.to_path_buf(),
        source,
    })?;
    schema.check()?;
    Ok((schema, hash))
}

/// Pretty JSON to `out`, or to stdout when `out` is `None`.
pub fn emit_json<S: Serialize>(value: &S, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => write_bytes(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
