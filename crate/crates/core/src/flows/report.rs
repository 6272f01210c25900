use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownLevel {
    pub split: String,
    pub row: usize,
    pub feature: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub file: String,
    pub row: usize,
    pub reason: String,
}

/// What a loader dropped, replaced or could not encode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub sources: Vec<String>,
    pub dropped_columns: Vec<String>,
    pub unknown_levels: Vec<UnknownLevel>,
    pub rejected_rows: Vec<RejectedRow>,
    pub replaced_non_finite: usize,
    pub notes: Vec<String>,
}

impl LoadReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# load report").unwrap();
        for src in &self.sources {
            writeln!(s, "source: {src}").unwrap();
        }
        writeln!(s, "dropped_columns: {}", self.dropped_columns.len()).unwrap();
        for c in &self.dropped_columns {
            writeln!(s, "  - {c}").unwrap();
        }
        writeln!(s, "replaced_non_finite: {}", self.replaced_non_finite).unwrap();
        writeln!(s, "unknown_levels: {}", self.unknown_levels.len()).unwrap();
        for u in &self.unknown_levels {
            writeln!(s, "  - {} row {}: {}={}", u.split, u.row, u.feature, u.level).unwrap();
        }
        writeln!(s, "rejected_rows: {}", self.rejected_rows.len()).unwrap();
        for r in &self.rejected_rows {
            writeln!(s, "  - {} row {}: {}", r.file, r.row, r.reason).unwrap();
        }
        for n in &self.notes {
            writeln!(s, "note: {n}").unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
