use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, SurvivalTree, TreeOptions};
use crate::curves::{pointwise_mean, StepCurve};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

/// Bagged survival trees; the prediction is the pointwise mean of the trees'
/// leaf curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSurvivalForest {
    trees: Vec<SurvivalTree>,
}

pub fn fit_random_survival_forest(data: &SurvivalDataset, opts: &ForestOptions) -> Result<RandomSurvivalForest> {
    let p = data.n_features();
    let mtry = opts.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
    if opts.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    if p > 0 && !(1..=p).contains(&mtry) {
        return Err(Error::InvalidParameter(format!("mtry must lie in [1, {p}], got {mtry}")));
    }
    let tree_opts = TreeOptions { max_depth: opts.max_depth.unwrap_or(usize::MAX), min_leaf: opts.min_leaf, mtry: Some(mtry) };
    let n = data.len();
    let trees = (0..opts.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive_seed(opts.seed, seed::STREAM_FOREST, t as u64));
            let rows: Vec<usize> = if opts.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow(data.records(), rows, &tree_opts, Some(&mut rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomSurvivalForest { trees })
}

impl RandomSurvivalForest {
    pub fn predict(&self, x: &[f64]) -> StepCurve {
        let leaves: Vec<&StepCurve> = self.trees.iter().map(|t| t.predict(x)).collect();
        pointwise_mean(&leaves).expect("forest has at least one tree")
    }

    pub fn trees(&self) -> &[SurvivalTree] {
        &self.trees
    }
}
