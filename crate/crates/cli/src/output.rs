//! Result tables and their CSV/JSON files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Format;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed file: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v as i64)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// Rounds to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

impl Value {
    fn rounded(&self) -> Value {
        match self {
            Value::Num(v) => Value::Num(round12(*v)),
            other => other.clone(),
        }
    }

    fn render(&self) -> String {
        match self {
            Value::Int(i) => i.to_string(),
            Value::Num(v) => format!("{:?}", round12(*v)),
            Value::Text(s) => s.clone(),
        }
    }

    fn parse(field: &str) -> Value {
        if let Ok(i) = field.parse::<i64>() {
            return Value::Int(i);
        }
        match field.parse::<f64>() {
            Ok(v) => Value::Num(v),
            Err(_) => Value::Text(field.to_string()),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Int(i) => Some(*i as f64),
            Value::Text(_) => None,
        }
    }
}

/// One output file: header metadata, named columns, rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub metadata: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            metadata: BTreeMap::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[idx]).collect())
    }

    /// Copy with every float rounded to 12 significant digits, i.e. what a
    /// file round trip returns.
    pub fn rounded(&self) -> Table {
        Table {
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Value::rounded).collect())
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultSet {
    pub command: String,
    pub config_sha256: String,
    pub code_version: String,
    pub tables: Vec<Table>,
}

impl ResultSet {
    pub fn new(command: &str, config_sha256: String) -> Self {
        Self {
            command: command.to_string(),
            config_sha256,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            tables: Vec::new(),
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn header(&self, table: &Table) -> BTreeMap<String, String> {
        let mut h = table.metadata.clone();
        h.insert("command".into(), self.command.clone());
        h.insert("config_sha256".into(), self.config_sha256.clone());
        h.insert("code_version".into(), self.code_version.clone());
        h
    }
}

#[derive(Serialize, Deserialize)]
struct JsonFile {
    metadata: BTreeMap<String, String>,
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

pub fn render_csv(
    metadata: &BTreeMap<String, String>,
    table: &Table,
) -> Result<String, OutputError> {
    let mut out = String::new();
    for (k, v) in metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Value::render))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| OutputError::Malformed(e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).map_err(|e| OutputError::Malformed(e.to_string()))?);
    Ok(out)
}

pub fn render_json(
    metadata: &BTreeMap<String, String>,
    table: &Table,
) -> Result<String, OutputError> {
    let file = JsonFile {
        metadata: metadata.clone(),
        columns: table.columns.clone(),
        rows: table.rounded().rows,
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Parses a CSV file written by [`render_csv`]; returns header and table
/// (named `name`).
pub fn parse_csv(name: &str, text: &str) -> Result<(BTreeMap<String, String>, Table), OutputError> {
    let mut metadata = BTreeMap::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(kv) = line.strip_prefix("# ") {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| OutputError::Malformed(format!("bad header line {line:?}")))?;
            metadata.insert(k.to_string(), v.to_string());
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(Value::parse).collect());
    }
    Ok((
        metadata,
        Table {
            name: name.to_string(),
            metadata: BTreeMap::new(),
            columns,
            rows,
        },
    ))
}

pub fn parse_json(
    name: &str,
    text: &str,
) -> Result<(BTreeMap<String, String>, Table), OutputError> {
    let f: JsonFile = serde_json::from_str(text)?;
    Ok((
        f.metadata,
        Table {
            name: name.to_string(),
            metadata: BTreeMap::new(),
            columns: f.columns,
            rows: f.rows,
        },
    ))
}

/// Writes one file per table into `dir`, in table order.
pub fn emit_results(
    results: &ResultSet,
    format: Format,
    dir: &Path,
) -> Result<Vec<PathBuf>, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::with_capacity(results.tables.len());
    for table in &results.tables {
        let header = results.header(table);
        let text = match format {
            Format::Csv => render_csv(&header, table)?,
            Format::Json => render_json(&header, table)?,
        };
        let path = dir.join(format!("{}.{}", table.name, format.extension()));
        fs::write(&path, text).map_err(|source| OutputError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads back a file written by [`emit_results`].
pub fn read_result_file(path: &Path) -> Result<(BTreeMap<String, String>, Table), OutputError> {
    let text = fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => parse_csv(&name, &text),
        Some("json") => parse_json(&name, &text),
        other => Err(OutputError::Malformed(format!(
            "unknown extension {other:?}"
        ))),
    }
}
