//! CSV emission with provenance metadata.
//!
//! Every artifact the workbench produces is a [`CsvTable`]: a rectangular
//! block of `f64` cells under a named header, preceded by `#`-prefixed
//! metadata lines (seed, version, configuration hash, report-specific
//! notes).  Cells are rendered with 17 significant digits so that parsing
//! the file recovers every value bit-for-bit, and nothing time- or
//! machine-dependent is ever stamped, so a table is a pure function of
//! (configuration, seed, library version).
//!
//! Rows may be *flagged* (quadrature failure, tolerance breach).  Flags are
//! carried out-of-band in the `flagged_rows` metadata entry so the numeric
//! block stays rectangular; [`CsvTable::is_flagged`] is what drives the
//! nonzero exit code of the command-line tool.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::Result;

/// One rectangular numeric table with metadata and row flags.
#[derive(Debug, Clone)]
pub struct CsvTable {
    /// Short kebab-case name; used as the default file stem.
    pub title: String,
    /// Column names, one per cell of every row.
    pub columns: Vec<String>,
    /// Numeric cells; every row has exactly `columns.len()` entries.
    pub rows: Vec<Vec<f64>>,
    /// `(key, value)` pairs rendered as `# key = value` lines, in insertion
    /// order.
    pub metadata: Vec<(String, String)>,
    /// Indices of rows that failed a gate or a quadrature.
    pub flagged: BTreeSet<usize>,
}

impl CsvTable {
    pub fn new(title: impl Into<String>, columns: &[&str]) -> Self {
        CsvTable {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            metadata: Vec::new(),
            flagged: BTreeSet::new(),
        }
    }

    /// Appends a row; panics if the width does not match the header.
    pub fn push_row(&mut self, row: Vec<f64>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width {} does not match header width {}",
            row.len(),
            self.columns.len()
        );
        self.rows.push(row);
    }

    /// Appends a row and marks it as flagged.
    pub fn push_flagged_row(&mut self, row: Vec<f64>) {
        self.push_row(row);
        self.flagged.insert(self.rows.len() - 1);
    }

    /// Marks an existing row as flagged.
    pub fn flag_row(&mut self, index: usize) {
        assert!(index < self.rows.len(), "flagging row {index} of {}", self.rows.len());
        self.flagged.insert(index);
    }

    pub fn add_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.push((key.into(), value.into()));
    }

    /// True when at least one row carries a flag.
    pub fn is_flagged(&self) -> bool {
        !self.flagged.is_empty()
    }

    /// Renders the full file: metadata lines, the flag summary, the header,
    /// then one line per row with every cell at 17 significant digits.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            out.push_str("# ");
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        let flags: Vec<String> = self.flagged.iter().map(|i| i.to_string()).collect();
        out.push_str("# flagged_rows = ");
        if flags.is_empty() {
            out.push_str("none");
        } else {
            out.push_str(&flags.join(";"));
        }
        out.push('\n');
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_cell(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes [`CsvTable::render`] to `path`, creating parent directories.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// One cell at full double precision: 17 significant digits in scientific
/// notation, so `str::parse::<f64>` recovers the exact bit pattern.
fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_header_metadata_and_flags() {
        let mut t = CsvTable::new("demo", &["a", "b"]);
        t.add_metadata("seed", "42");
        t.add_metadata("version", "0.1.0");
        t.push_row(vec![1.0, 2.0]);
        t.push_flagged_row(vec![3.0, f64::NAN]);
        t.push_row(vec![-1.5, f64::INFINITY]);
        t.flag_row(2);

        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed = 42");
        assert_eq!(lines[1], "# version = 0.1.0");
        assert_eq!(lines[2], "# flagged_rows = 1;2");
        assert_eq!(lines[3], "a,b");
        assert!(lines[4].starts_with("1.0000000000000000e0,"));
        assert!(lines[5].ends_with(",nan"));
        assert!(lines[6].ends_with(",inf"));
        assert!(t.is_flagged());
    }

    #[test]
    fn cells_round_trip_exactly() {
        let values = [
            0.1,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -2.2250738585072014e-308,
            f64::MAX,
            f64::MIN_POSITIVE,
            0.0,
        ];
        for &v in &values {
            let back: f64 = format_cell(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v} did not round-trip");
        }
    }

    #[test]
    fn render_is_deterministic() {
        let build = || {
            let mut t = CsvTable::new("same", &["x"]);
            t.add_metadata("config_hash", "deadbeef");
            for i in 0..32 {
                t.push_row(vec![(i as f64).sin()]);
            }
            t
        };
        assert_eq!(build().render(), build().render());
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn rejects_ragged_rows() {
        let mut t = CsvTable::new("bad", &["a", "b"]);
        t.push_row(vec![1.0]);
    }

    #[test]
    fn unflagged_table_reports_clean() {
        let mut t = CsvTable::new("clean", &["a"]);
        t.push_row(vec![1.0]);
        assert!(!t.is_flagged());
        assert!(t.render().contains("# flagged_rows = none"));
    }
}
