//! CSV tables, task bookkeeping and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, LabResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn schema_line() -> String {
    format!("# ssl-gmm-lab v{} schema={}", env!("CARGO_PKG_VERSION"), SCHEMA_VERSION)
}

/// Shortest round-trip decimal form; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.file);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> LabResult<()> {
        let path = dir.join(&self.file);
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        writeln!(f, "{}", schema_line()).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(io_err(&path))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskState {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub name: String,
    pub status: TaskState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TaskStatus {
    pub fn ok(name: impl Into<String>) -> Self {
        TaskStatus {
            name: name.into(),
            status: TaskState::Ok,
            detail: None,
        }
    }

    pub fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Self {
        TaskStatus {
            name: name.into(),
            status: TaskState::Failed,
            detail: Some(err.to_string()),
        }
    }

    pub fn from_result<T, E: std::fmt::Display>(name: impl Into<String>, r: &Result<T, E>) -> Self {
        match r {
            Ok(_) => TaskStatus::ok(name),
            Err(e) => TaskStatus::failed(name, e),
        }
    }
}

/// Everything an experiment produces before it touches the disk.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    /// Headline scalars; must not contain timestamps so reruns are identical.
    pub summary: serde_json::Map<String, serde_json::Value>,
    pub tasks: Vec<TaskStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub artifact_version: String,
    pub schema: u32,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub tasks: Vec<TaskStatus>,
    /// File names relative to the output directory, this manifest included.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn all_ok(&self) -> bool {
        self.tasks.iter().all(|t| t.status == TaskState::Ok)
    }

    pub fn failed_tasks(&self) -> usize {
        self.tasks.iter().filter(|t| t.status == TaskState::Failed).count()
    }

    pub fn load(dir: &Path) -> Option<RunManifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 12345.678] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt(f64::NAN), "nan");
        assert_eq!(fmt(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn table_has_schema_line() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec![fmt(1.5), "x,y".into()]);
        t.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# ssl-gmm-lab v"));
        assert_eq!(lines.next().unwrap(), "a,b");
        assert_eq!(lines.next().unwrap(), "1.5,\"x,y\"");
    }
}
