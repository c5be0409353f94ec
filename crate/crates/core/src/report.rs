//! Deterministic CSV reports: a comment header echoing the effective
//! configuration, a column line, then data rows. Bodies are byte-stable for
//! a fixed seed (wall-clock timestamps are allowed only in the console
//! summary, never here).

use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub use crate::path::fmt_f64;

pub fn cell(x: f64) -> String {
    fmt_f64(x)
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub name: String,
    header: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Report {
    pub fn new(name: &str) -> Self {
        Report {
            name: name.to_string(),
            ..Default::default()
        }
    }

    /// Echo one effective-configuration entry into the `#` header.
    pub fn kv(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.header.push((key.to_string(), value.to_string()));
        self
    }

    pub fn kv_f64(&mut self, key: &str, value: f64) -> &mut Self {
        self.kv(key, fmt_f64(value))
    }

    pub fn columns(&mut self, cols: &[&str]) -> &mut Self {
        self.columns = cols.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        debug_assert_eq!(cells.len(), self.columns.len(), "ragged report row");
        self.rows.push(cells);
        self
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "# report={}", self.name)?;
        for (k, v) in &self.header {
            writeln!(w, "# {}={}", k, v)?;
        }
        if !self.columns.is_empty() {
            writeln!(w, "{}", self.columns.join(","))?;
        }
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Write to `<dir>/<name>.csv`, creating the directory if needed.
    pub fn save(&self, dir: &Path) -> io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.csv", self.name));
        let mut f = fs::File::create(&path)?;
        self.write(&mut f)?;
        Ok(path)
    }

    pub fn to_string_lossy(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("reports are ASCII")
    }
}

/// Console summary header; the one place a wall-clock stamp may appear.
pub fn summary_header(tool: &str) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("== {} (unix-time {}) ==", tool, secs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_body_and_header_order() {
        let mut r = Report::new("probe");
        r.kv("seed", 7)
            .kv_f64("dt", 0.001)
            .columns(&["k", "value"])
            .row(vec!["1".into(), cell(0.5)])
            .row(vec!["2".into(), cell(2.0)]);
        let s = r.to_string_lossy();
        assert_eq!(
            s,
            "# report=probe\n# seed=7\n# dt=1.00000000000000002e-3\nk,value\n1,5.00000000000000000e-1\n2,2.0\n"
        );
        assert_eq!(s, r.to_string_lossy());
    }
}
