use serde::{Deserialize, Serialize};

use super::Standardizer;
use crate::curves::{kaplan_meier, StepCurve};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// Kaplan–Meier over the `k` training records nearest to the query
/// (Euclidean distance on standardized covariates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnSurvival {
    pub k: usize,
    standardizer: Standardizer,
    rows: Vec<Vec<f64>>,
    times: Vec<f64>,
    events: Vec<bool>,
}

pub fn fit_knn_survival(data: &SurvivalDataset, k: Option<usize>) -> Result<KnnSurvival> {
    let n = data.len();
    let k = k.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k must lie in [1, {n}], got {k}")));
    }
    let standardizer = Standardizer::fit(data.records().iter().map(|r| r.covariates.as_slice()), data.n_features());
    let rows = data.records().iter().map(|r| standardizer.transform(&r.covariates)).collect();
    Ok(KnnSurvival { k, standardizer, rows, times: data.times(), events: data.events() })
}

impl KnnSurvival {
    /// Indices of the `k` nearest training records, nearest first. Distance
    /// ties go to the lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let z = self.standardizer.transform(x);
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_unstable_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: &[f64]) -> StepCurve {
        let nb = self.neighbors(x);
        let t: Vec<f64> = nb.iter().map(|&i| self.times[i]).collect();
        let e: Vec<bool> = nb.iter().map(|&i| self.events[i]).collect();
        kaplan_meier(&t, &e).expect("k >= 1")
    }
}
