//! Fixtures shared by the criterion benchmarks.

use survcobra::data::{generate_synthetic, SyntheticConfig};
use survcobra::SurvivalDataset;

/// Synthetic Weibull data with the default design and `n` records.
pub fn synthetic(n: usize, seed: u64) -> SurvivalDataset {
    generate_synthetic(&SyntheticConfig { n, seed, ..Default::default() }).expect("default design is valid")
}

/// The first `count` covariate rows of `data`.
pub fn query_rows(data: &SurvivalDataset, count: usize) -> Vec<Vec<f64>> {
    data.records().iter().take(count).map(|r| r.covariates.clone()).collect()
}
