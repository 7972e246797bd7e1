//! Artifact writing with provenance. CSV files open with `#` comment lines
//! naming the tool, version, seed and config hash; JSON files carry the
//! same fields next to a `data` member.

use crate::run::Format;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const TOOL: &str = "fortsim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    /// Hash the effective configuration, not the file bytes, so that a run
    /// with defaults and a run with the shipped files agree.
    pub fn new(command: &str, seed: u64, effective: &impl Serialize) -> Self {
        let bytes = serde_json::to_vec(effective).expect("config serialises");
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Provenance {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            config_hash: format!("sha256:{hex}"),
        }
    }
}

/// Rows of typed cells under fixed column names.
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, prov: &Provenance, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = String::new();
                s += &format!("# tool: {} {}\n", prov.tool, prov.version);
                s += &format!("# command: {}\n", prov.command);
                s += &format!("# seed: {}\n", prov.seed);
                s += &format!("# config_hash: {}\n", prov.config_hash);
                s += &self.columns.join(",");
                s.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(cell).collect();
                    s += &cells.join(",");
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj = self
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(c, v)| (c.to_string(), v.clone()))
                            .collect::<serde_json::Map<_, _>>();
                        Value::Object(obj)
                    })
                    .collect();
                document(prov, &rows)
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// Pretty JSON document with provenance fields and `data`.
pub fn document(prov: &Provenance, data: &impl Serialize) -> String {
    let doc = json!({
        "tool": prov.tool,
        "version": prov.version,
        "command": prov.command,
        "seed": prov.seed,
        "config_hash": prov.config_hash,
        "data": data,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("document serialises");
    s.push('\n');
    s
}

/// Where artifacts go: files in a directory, or stdout one after another.
pub struct Sink<'a> {
    pub dir: Option<&'a Path>,
}

impl Sink<'_> {
    pub fn write(&self, name: &str, content: &str) -> std::io::Result<()> {
        match self.dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                std::fs::write(d.join(name), content)
            }
            None => {
                use std::io::Write;
                let mut out = std::io::stdout().lock();
                out.write_all(content.as_bytes())?;
                out.flush()
            }
        }
    }
}

pub fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}
