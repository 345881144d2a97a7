//! Deterministic CSV and JSON emission.
//!
//! Every floating value is printed with 12 significant digits in scientific
//! notation; rows are written in a fixed order with LF newlines and no
//! locale-dependent formatting, so identical runs produce byte-identical
//! files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// 12-significant-digit scientific notation.
pub fn sci12(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.11e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// A table with a fixed header, rendered as CSV and optionally mirrored as a
/// JSON array of row objects.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: Vec<S>) -> Table {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())
    }

    /// JSON array of row objects. A cell is emitted as a bare number when it
    /// parses as a finite f64 or an integer; otherwise it is quoted.
    pub fn to_json(&self) -> String {
        let mut out = String::from("[");
        for (i, row) in self.rows.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str("\n  {");
            for (j, (key, value)) in self.header.iter().zip(row).enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("\"{key}\":"));
                let numeric = value.parse::<f64>().map(f64::is_finite).unwrap_or(false);
                if numeric {
                    out.push_str(value);
                } else {
                    out.push_str(&format!("\"{value}\""));
                }
            }
            out.push('}');
        }
        out.push_str("\n]\n");
        out
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_json().as_bytes())
    }
}

/// The JSON mirror path for a CSV output path: `.csv` replaced by `.json`,
/// otherwise `.json` appended.
pub fn json_mirror_path(csv: &Path) -> PathBuf {
    if csv.extension().map(|e| e == "csv").unwrap_or(false) {
        csv.with_extension("json")
    } else {
        let mut p = csv.as_os_str().to_owned();
        p.push(".json");
        PathBuf::from(p)
    }
}

/// Write the table as CSV and, when requested, its JSON mirror.
pub fn emit(table: &Table, path: &Path, emit_json: bool) -> std::io::Result<()> {
    table.write_csv(path)?;
    if emit_json {
        table.write_json(&json_mirror_path(path))?;
    }
    Ok(())
}
