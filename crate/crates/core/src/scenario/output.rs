use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::ScenarioError;
use crate::measurement::SCHEMA_VERSION;

/// Writes `contents` to a temporary file in the target directory, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), ScenarioError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ScenarioError::io(dir, e))?;
    tmp.write_all(contents)
        .map_err(|e| ScenarioError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| ScenarioError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| ScenarioError::io(path, e.error))?;
    Ok(())
}

/// A numeric table emitted as CSV with a JSON sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn sidecar_json(&self, meta: serde_json::Value) -> serde_json::Value {
        serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "columns": self.columns,
            "rows": self.rows.len(),
            "meta": meta,
        })
    }
}
