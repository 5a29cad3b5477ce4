//! Result tables, JSON sidecars and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_nan() {
            Cell::Empty
        } else {
            Cell::Num(v)
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
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

impl Cell {
    fn csv(&self) -> String {
        match self {
            // shortest round-trip form, identical on every platform
            Cell::Num(v) => format!("{v:?}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => json!(v),
            Cell::Num(v) => json!(v.to_string()),
            Cell::Int(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Rectangular result data.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let m: Map<String, Value> = self.header.iter().cloned().zip(r.iter().map(Cell::json)).collect();
                Value::Object(m)
            })
            .collect();
        Value::Array(rows)
    }
}

/// Everything one experiment produces.
#[derive(Clone, Debug, Default)]
pub struct Outputs {
    pub tables: Vec<Table>,
    /// Always written as JSON (summaries, matrix headers).
    pub documents: Vec<(String, Value)>,
}

impl Outputs {
    pub fn table(mut self, t: Table) -> Self {
        self.tables.push(t);
        self
    }

    pub fn document(mut self, name: &str, v: impl Serialize) -> Self {
        let v = serde_json::to_value(v).expect("results serialize");
        self.documents.push((name.to_string(), v));
        self
    }

    /// Serialized files in write order.
    pub fn render(&self, format: Format) -> Vec<(String, Vec<u8>)> {
        let mut files = Vec::new();
        for t in &self.tables {
            match format {
                Format::Csv => files.push((format!("{}.csv", t.name), t.to_csv().into_bytes())),
                Format::Json => files.push((format!("{}.json", t.name), pretty(&t.to_json()))),
            }
        }
        for (name, v) in &self.documents {
            files.push((format!("{name}.json"), pretty(v)));
        }
        files
    }
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("json serializes");
    b.push(b'\n');
    b
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: String,
    pub seed: u64,
    pub format: Format,
    pub jobs: usize,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
    /// Digest over every file entry; equal across runs of the same config.
    pub results_sha256: String,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes all files plus the manifest into `dir`.
#[allow(clippy::too_many_arguments)]
pub fn write_all(
    dir: &Path,
    outputs: &Outputs,
    format: Format,
    kind: &str,
    seed: u64,
    jobs: usize,
    config_sha256: String,
    wall_clock_seconds: f64,
) -> std::io::Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (name, bytes) in outputs.render(format) {
        std::fs::write(dir.join(&name), &bytes)?;
        files.push(FileEntry {
            path: name,
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
    }
    let listing: String = files.iter().map(|f| format!("{} {}\n", f.sha256, f.path)).collect();
    let manifest = Manifest {
        tool: "metabattle",
        version: env!("CARGO_PKG_VERSION"),
        kind: kind.to_string(),
        seed,
        format,
        jobs,
        config_sha256,
        results_sha256: sha256_hex(listing.as_bytes()),
        files,
        wall_clock_seconds,
    };
    std::fs::write(dir.join(MANIFEST), pretty(&serde_json::to_value(&manifest).expect("manifest serializes")))?;
    Ok(manifest)
}
