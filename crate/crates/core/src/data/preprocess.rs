use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::csv::RawTable;
use super::{SurvivalDataset, SurvivalRecord};
use crate::error::{Error, Result};

/// Column roles for [`preprocess`]. Columns not listed as categorical are numeric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub time_col: String,
    pub event_col: String,
    #[serde(default)]
    pub categorical: Vec<String>,
}

impl ColumnSchema {
    pub fn numeric(time_col: &str, event_col: &str) -> Self {
        Self { time_col: time_col.into(), event_col: event_col.into(), categorical: Vec::new() }
    }
}

enum Feature {
    Numeric(Vec<f64>),
    /// (level names in sorted order, level index per row)
    Categorical(Vec<String>, Vec<usize>),
}

/// Mean-imputes numeric columns, mode-imputes categoricals, and one-hot encodes
/// every categorical into one indicator per level. Categoricals with a single
/// level carry no information and are dropped.
pub fn preprocess(raw: &RawTable, schema: &ColumnSchema) -> Result<SurvivalDataset> {
    let time_idx = raw.column_index(&schema.time_col)?;
    let event_idx = raw.column_index(&schema.event_col)?;
    for c in &schema.categorical {
        raw.column_index(c)?;
    }

    let mut times = Vec::with_capacity(raw.rows.len());
    let mut events = Vec::with_capacity(raw.rows.len());
    for (i, row) in raw.rows.iter().enumerate() {
        let row_no = i + 1;
        let bad = |message: String| Error::BadRow { row: row_no, message };
        let t = row[time_idx]
            .as_deref()
            .ok_or_else(|| bad(format!("missing `{}`", schema.time_col)))?;
        let t: f64 = t
            .parse()
            .map_err(|_| bad(format!("non-numeric `{}` value `{t}`", schema.time_col)))?;
        if !(t.is_finite() && t > 0.0) {
            return Err(bad(format!("`{}` must be positive, found {t}", schema.time_col)));
        }
        let e = row[event_idx]
            .as_deref()
            .ok_or_else(|| bad(format!("missing `{}`", schema.event_col)))?;
        let e = match e.parse::<f64>() {
            Ok(v) if v == 0.0 => false,
            Ok(v) if v == 1.0 => true,
            _ => return Err(bad(format!("`{}` must be 0 or 1, found `{e}`", schema.event_col))),
        };
        times.push(t);
        events.push(e);
    }

    let mut names = Vec::new();
    let mut features = Vec::new();
    for (c, name) in raw.header.iter().enumerate() {
        if c == time_idx || c == event_idx {
            continue;
        }
        let column: Vec<Option<&str>> = raw.rows.iter().map(|r| r[c].as_deref()).collect();
        if schema.categorical.contains(name) {
            let (levels, codes) = impute_categorical(name, &column)?;
            if levels.len() < 2 {
                log::warn!("dropping categorical column `{name}` with a single level");
                continue;
            }
            names.push(name.clone());
            features.push(Feature::Categorical(levels, codes));
        } else {
            names.push(name.clone());
            features.push(Feature::Numeric(impute_numeric(name, &column)?));
        }
    }

    let mut feature_names = Vec::new();
    for (name, f) in names.iter().zip(&features) {
        match f {
            Feature::Numeric(_) => feature_names.push(name.clone()),
            Feature::Categorical(levels, _) => {
                feature_names.extend(levels.iter().map(|l| format!("{name}={l}")))
            }
        }
    }

    let records = (0..raw.rows.len())
        .map(|i| {
            let mut x = Vec::with_capacity(feature_names.len());
            for f in &features {
                match f {
                    Feature::Numeric(v) => x.push(v[i]),
                    Feature::Categorical(levels, codes) => {
                        x.extend((0..levels.len()).map(|l| if codes[i] == l { 1.0 } else { 0.0 }))
                    }
                }
            }
            SurvivalRecord::new(x, times[i], events[i])
        })
        .collect();
    SurvivalDataset::new(records, feature_names)
}

fn impute_numeric(name: &str, column: &[Option<&str>]) -> Result<Vec<f64>> {
    let mut parsed = Vec::with_capacity(column.len());
    for (i, cell) in column.iter().enumerate() {
        parsed.push(match cell {
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    return Err(Error::BadRow {
                        row: i + 1,
                        message: format!("non-numeric value `{s}` in numeric column `{name}`"),
                    })
                }
            },
            None => None,
        });
    }
    let observed: Vec<f64> = parsed.iter().flatten().copied().collect();
    if observed.is_empty() {
        return Err(Error::AllMissing(name.to_string()));
    }
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    Ok(parsed.into_iter().map(|v| v.unwrap_or(mean)).collect())
}

fn impute_categorical(name: &str, column: &[Option<&str>]) -> Result<(Vec<String>, Vec<usize>)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in column.iter().flatten() {
        *counts.entry(s).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::AllMissing(name.to_string()));
    }
    // Mode; ties resolve to the lexicographically smallest level.
    let mode = counts
        .iter()
        .fold(None::<(&str, usize)>, |best, (&l, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l)
        .expect("non-empty");
    let levels: BTreeSet<&str> = counts.keys().copied().collect();
    let levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
    let codes = column
        .iter()
        .map(|cell| {
            let v = cell.unwrap_or(mode);
            levels.iter().position(|l| l == v).expect("level present")
        })
        .collect();
    Ok((levels, codes))
}
