//! Survival datasets: the `(X, Y, δ)` records, ingestion, splitting and the
//! synthetic Weibull design.

mod csv;
mod preprocess;
mod split;
mod synthetic;

pub use self::csv::{load_csv, read_raw_table, RawTable};
pub use preprocess::{preprocess, ColumnSchema};
pub use split::{cobra_split, kfold_indices, kfold_split, DatasetSplit};
pub use synthetic::{generate_synthetic, generate_synthetic_with_latent, link, SyntheticConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject: covariates, observed time `Y = min(T, C)` and the event flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub covariates: Vec<f64>,
    pub time: f64,
    /// `true` when the event was observed, `false` when right-censored.
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(covariates: Vec<f64>, time: f64, event: bool) -> Self {
        Self { covariates, time, event }
    }
}

/// An ordered collection of records sharing one feature layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    feature_names: Vec<String>,
}

impl SurvivalDataset {
    /// Validates feature counts, positive finite times and the presence of at
    /// least one observed event.
    pub fn new(records: Vec<SurvivalRecord>, feature_names: Vec<String>) -> Result<Self> {
        let data = Self::from_parts(records, feature_names)?;
        if !data.records.iter().any(|r| r.event) {
            return Err(Error::InvalidDataset("no record has an observed event".into()));
        }
        Ok(data)
    }

    /// Same checks as [`SurvivalDataset::new`] except the event requirement.
    /// Splits of a valid dataset (test folds, calibration halves) may legitimately
    /// contain no events.
    pub fn from_parts(records: Vec<SurvivalRecord>, feature_names: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        let p = feature_names.len();
        for (i, r) in records.iter().enumerate() {
            if r.covariates.len() != p {
                return Err(Error::InvalidDataset(format!(
                    "record {i} has {} covariates, expected {p}",
                    r.covariates.len()
                )));
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::InvalidDataset(format!(
                    "record {i} has non-positive or non-finite time {}",
                    r.time
                )));
            }
        }
        Ok(Self { records, feature_names })
    }

    /// Builds a dataset with generated feature names `x0, x1, ...`.
    pub fn from_columns(covariates: Vec<Vec<f64>>, times: &[f64], events: &[bool]) -> Result<Self> {
        if covariates.len() != times.len() || times.len() != events.len() {
            return Err(Error::InvalidDataset("column lengths differ".into()));
        }
        let p = covariates.first().map_or(0, Vec::len);
        let records = covariates
            .into_iter()
            .zip(times.iter().zip(events))
            .map(|(x, (&t, &e))| SurvivalRecord::new(x, t, e))
            .collect();
        Self::new(records, default_feature_names(p))
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn covariates(&self) -> Vec<&[f64]> {
        self.records.iter().map(|r| r.covariates.as_slice()).collect()
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn max_time(&self) -> f64 {
        self.records.iter().map(|r| r.time).fold(0.0, f64::max)
    }

    /// Records at `indices`, in the given order. Does not require events.
    ///
    /// # Panics
    /// If `indices` is empty or out of range.
    pub fn subset(&self, indices: &[usize]) -> SurvivalDataset {
        assert!(!indices.is_empty(), "subset of zero records");
        SurvivalDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Concatenates two datasets with the same feature layout.
    pub fn concat(&self, other: &SurvivalDataset) -> Result<SurvivalDataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::InvalidDataset("feature layouts differ".into()));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Ok(SurvivalDataset { records, feature_names: self.feature_names.clone() })
    }

    /// Reorders the covariate columns: column `i` of the result is column
    /// `order[i]` of `self`.
    pub fn permute_features(&self, order: &[usize]) -> Result<SurvivalDataset> {
        let p = self.n_features();
        let mut seen = vec![false; p];
        if order.len() != p || order.iter().any(|&j| j >= p || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidParameter("feature order is not a permutation".into()));
        }
        let records = self
            .records
            .iter()
            .map(|r| SurvivalRecord {
                covariates: order.iter().map(|&j| r.covariates[j]).collect(),
                ..r.clone()
            })
            .collect();
        let feature_names = order.iter().map(|&j| self.feature_names[j].clone()).collect();
        Ok(SurvivalDataset { records, feature_names })
    }

    /// Clean numeric table holding the features followed by `time` and `event`.
    pub fn to_raw_table(&self) -> RawTable {
        let mut header = self.feature_names.clone();
        header.push("time".into());
        header.push("event".into());
        let rows = self
            .records
            .iter()
            .map(|r| {
                let mut row: Vec<Option<String>> =
                    r.covariates.iter().map(|v| Some(v.to_string())).collect();
                row.push(Some(r.time.to_string()));
                row.push(Some(if r.event { "1" } else { "0" }.to_string()));
                row
            })
            .collect();
        RawTable { header, rows }
    }
}

pub(crate) fn default_feature_names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}
