use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Command, ExperimentConfig};
use crate::error::CliError;

pub const RECORD_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
    Flag(bool),
}

impl Cell {
    /// CSV text: floats with 17 significant digits.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Num(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Flag(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Projection onto `columns`, erroring on any that are absent.
    pub fn select(&self, columns: &[&str]) -> Result<Table, CliError> {
        if self.rows.is_empty() {
            return Ok(Table::new(columns));
        }
        let missing: Vec<String> = columns.iter().filter(|c| self.index(c).is_none()).map(|c| c.to_string()).collect();
        if !missing.is_empty() {
            return Err(CliError::MissingColumns(missing));
        }
        let idx: Vec<usize> = columns.iter().map(|c| self.index(c).expect("checked")).collect();
        Ok(Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        })
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub command: Command,
    /// SHA-256 of the canonical config JSON.
    pub config_digest: String,
    /// Git-style blob hash (`blob <len>\0<bytes>`, SHA-256) of the canonical config.
    pub input_hash: String,
    /// Seconds since the Unix epoch; not part of any CSV output.
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub table: Table,
    pub metadata: serde_json::Value,
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn canonical_config(config: &ExperimentConfig) -> String {
    serde_json::to_string(config).expect("config serializes")
}

impl ResultRecord {
    pub fn new(config: &ExperimentConfig, table: Table, metadata: serde_json::Value) -> Self {
        let canon = canonical_config(config);
        let mut blob = format!("blob {}\0", canon.len()).into_bytes();
        blob.extend_from_slice(canon.as_bytes());
        let created_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            schema_version: RECORD_SCHEMA,
            command: config.command,
            config_digest: hex_digest(canon.as_bytes()),
            input_hash: hex_digest(&blob),
            created_unix,
            config: config.clone(),
            table,
            metadata,
        }
    }

    pub fn empty(config: &ExperimentConfig) -> Self {
        Self::new(config, Table::default(), serde_json::Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum View {
    SmallballCurve,
    ExponentFit,
    TailCurve,
    PicardDecay,
}

impl View {
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            View::SmallballCurve => &["epsilon", "p_hat", "ci_lo", "ci_hi", "method"],
            View::ExponentFit => &["epsilon", "p_hat", "stderr", "log_epsilon", "log_neg_log_p", "used"],
            View::TailCurve => &["lambda", "p_hat", "ci_lo", "ci_hi"],
            View::PicardDecay => &["sweep", "parameter", "moment", "stderr"],
        }
    }

    pub fn file_stem(&self) -> &'static str {
        match self {
            View::SmallballCurve => "smallball_curve",
            View::ExponentFit => "exponent_fit",
            View::TailCurve => "tail_curve",
            View::PicardDecay => "picard_decay",
        }
    }

    pub fn for_command(command: Command) -> Option<View> {
        match command {
            Command::Smallball => Some(View::SmallballCurve),
            Command::ExponentFit => Some(View::ExponentFit),
            Command::TailCurve => Some(View::TailCurve),
            Command::Localize => Some(View::PicardDecay),
            _ => None,
        }
    }
}

/// Tidy CSV for one view, plus the JSON sidecar for views that carry fit metadata.
pub fn emit_plot_data(record: &ResultRecord, view: View) -> Result<(String, Option<String>), CliError> {
    let csv = record.table.select(view.columns())?.to_csv()?;
    let sidecar = match view {
        View::ExponentFit => Some(serde_json::to_string_pretty(&record.metadata)?),
        _ => None,
    };
    Ok((csv, sidecar))
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

/// `record.json`, the raw table, and the command's plot view under `dir`.
pub fn write_outputs(record: &ResultRecord, dir: &Path) -> Result<Written, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Written::default();
    let stem = record.command.name();
    let mut put = |name: String, body: &str| -> Result<(), CliError> {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.files.push(path);
        Ok(())
    };
    put("record.json".into(), &serde_json::to_string_pretty(record)?)?;
    put(format!("{stem}.csv"), &record.table.to_csv()?)?;
    if let Some(view) = View::for_command(record.command) {
        let (csv, sidecar) = emit_plot_data(record, view)?;
        put(format!("{}.plot.csv", view.file_stem()), &csv)?;
        if let Some(s) = sidecar {
            put(format!("{}.meta.json", view.file_stem()), &s)?;
        }
    }
    Ok(written)
}
