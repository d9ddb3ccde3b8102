//! Result tables and their CSV/JSON renderings. A table carries enough
//! metadata (command, seed, `k`, scenario text) to be recomputed exactly.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }

    fn header(&self) -> String {
        format!("{} [{}]", self.name, self.unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        Cell::Num(x.unwrap_or(f64::NAN))
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) if *x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e15) => write!(f, "{x:e}"),
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Bool(b) => write!(f, "{b}"),
        }
    }
}

impl Cell {
    fn to_json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(x) => json!(x),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub razumikhin_k: f64,
    pub tolerances: String,
    pub scenario_sha256: String,
    pub scenario: String,
}

impl Metadata {
    pub fn new(
        command: &str,
        seed: u64,
        razumikhin_k: f64,
        tolerances: &str,
        scenario: &str,
    ) -> Self {
        Self {
            tool: "platoon".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            razumikhin_k,
            tolerances: tolerances.to_string(),
            scenario_sha256: hex::encode(Sha256::digest(scenario.as_bytes())),
            scenario: scenario.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub metadata: Metadata,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(metadata: Metadata, columns: Vec<Column>) -> Self {
        Self {
            metadata,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the header"
        );
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => Ok(self.to_json()),
        }
    }

    fn to_csv(&self) -> Result<String, CliError> {
        let m = &self.metadata;
        let mut out = String::new();
        out.push_str(&format!("# tool: {}\n", m.tool));
        out.push_str(&format!("# version: {}\n", m.version));
        out.push_str(&format!("# command: {}\n", m.command));
        out.push_str(&format!("# seed: {}\n", m.seed));
        out.push_str(&format!("# razumikhin_k: {}\n", m.razumikhin_k));
        out.push_str(&format!("# tolerances: {}\n", m.tolerances));
        out.push_str(&format!("# scenario_sha256: {}\n", m.scenario_sha256));
        out.push_str(&format!("# scenario: {}\n", json!(m.scenario)));
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Output(std::io::Error::other(e));
        w.write_record(self.columns.iter().map(Column::header))
            .map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))
                .map_err(csv_err)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| CliError::Output(e.into_error()))?;
        out.push_str(&String::from_utf8(body).expect("csv output is UTF-8"));
        Ok(out)
    }

    fn to_json(&self) -> String {
        let doc = json!({
            "metadata": self.metadata,
            "columns": self.columns,
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }
}

/// Recovers the metadata block of a rendered table, in either format.
pub fn read_metadata(text: &str) -> Result<(Metadata, Format), String> {
    if text.trim_start().starts_with('{') {
        let doc: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let meta = serde_json::from_value(doc["metadata"].clone()).map_err(|e| e.to_string())?;
        return Ok((meta, Format::Json));
    }
    let mut fields = serde_json::Map::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let Some((key, value)) = line[1..].trim_start().split_once(": ") else {
            continue;
        };
        let value = match key {
            "scenario" => {
                serde_json::from_str(value).map_err(|e| format!("scenario field: {e}"))?
            }
            "seed" => json!(value
                .parse::<u64>()
                .map_err(|e| format!("seed field: {e}"))?),
            "razumikhin_k" => json!(value
                .parse::<f64>()
                .map_err(|e| format!("razumikhin_k field: {e}"))?),
            _ => json!(value),
        };
        fields.insert(key.to_string(), value);
    }
    let meta = serde_json::from_value(Value::Object(fields))
        .map_err(|e| format!("metadata block: {e}"))?;
    Ok((meta, Format::Csv))
}
