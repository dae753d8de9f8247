use std::fs::File;
use std::path::Path;

use super::preprocess::{preprocess, ColumnSchema};
use super::SurvivalDataset;
use crate::error::{Error, Result};

/// Tokens treated as a missing cell, besides the empty string.
const MISSING_TOKENS: [&str; 4] = ["NA", "NaN", "nan", "null"];

/// A header plus string cells; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl RawTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }
}

/// Reads a comma-separated UTF-8 file with a header row.
pub fn read_raw_table(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::BadRow {
                row: i + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        rows.push(
            rec.iter()
                .map(|cell| {
                    let cell = cell.trim();
                    (!cell.is_empty() && !MISSING_TOKENS.contains(&cell)).then(|| cell.to_string())
                })
                .collect(),
        );
    }
    Ok(RawTable { header, rows })
}

/// Loads a numeric CSV: every column other than `time_col` and `event_col`
/// becomes a feature, in header order. Missing feature cells are mean-imputed.
pub fn load_csv(path: impl AsRef<Path>, time_col: &str, event_col: &str) -> Result<SurvivalDataset> {
    let raw = read_raw_table(path)?;
    preprocess(&raw, &ColumnSchema::numeric(time_col, event_col))
}
