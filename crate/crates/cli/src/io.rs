//! Output serialization: CSV tables with round-trip float formatting and
//! atomic file writes (write to a temporary file in the target directory,
//! then rename), so failed runs never leave partial data behind.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{CliError, CliResult};
use crate::experiments::RunOutcome;

/// 17-significant-digit scientific form: round-trips every finite `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory CSV table builder with the harness float convention.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

/// One CSV cell: either preformatted text or a float.
pub enum Cell {
    Text(String),
    Float(f64),
    Int(u64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl CsvTable {
    pub fn new(header: &[&str]) -> CliResult<Self> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header)
            .map_err(|e| CliError::Io(e.to_string()))?;
        Ok(CsvTable { writer })
    }

    pub fn row(&mut self, cells: Vec<Cell>) -> CliResult<()> {
        let fields: Vec<String> = cells
            .into_iter()
            .map(|c| match c {
                Cell::Text(s) => s,
                Cell::Float(x) => fmt_float(x),
                Cell::Int(i) => i.to_string(),
            })
            .collect();
        self.writer
            .write_record(&fields)
            .map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn into_bytes(self) -> CliResult<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Serializes a value as pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes `bytes` to `dir/name` atomically: the content goes to a temporary
/// file in `dir` first and is renamed into place, so readers never observe a
/// partial file.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.write_all(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    tmp.persist(dir.join(name))
        .map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

/// Writes every data file of a finished run, then the summary, into
/// `out_dir` (created if missing). All computation precedes the first write.
pub fn write_outcome(out_dir: &Path, outcome: &RunOutcome) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    for (name, bytes) in &outcome.files {
        write_atomic(out_dir, name, bytes)?;
    }
    let summary = to_json_bytes(&outcome.summary)?;
    write_atomic(out_dir, "summary.json", &summary)?;
    Ok(())
}
