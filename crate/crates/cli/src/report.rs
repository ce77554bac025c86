//! JSON envelope and CSV output.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub spec_sha256: Option<String>,
    pub seed: Option<u64>,
    pub result: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A flat table for `--csv`.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Formats a float so that it parses back exactly.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_json(path: &Path, env: &Envelope) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(env).map_err(|e| Failure::Input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), Failure> {
    let io = |e: csv::Error| Failure::Input(format!("cannot write {}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    w.flush()
        .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))
}
