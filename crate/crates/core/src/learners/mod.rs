//! Base survival models. Every learner is fit on a dataset and maps a
//! covariate vector to a survival curve.

pub(crate) mod cox;
mod forest;
mod knn;
mod logrank;
mod tree;

pub use cox::{
    breslow_baseline, fit_cox, partial_likelihood, CoxModel, CoxOptions, PartialLikelihood, PenaltyKind,
};
pub use forest::{fit_random_survival_forest, ForestOptions, RandomSurvivalForest};
pub use knn::{fit_knn_survival, KnnSurvival};
pub use logrank::{best_split, log_rank_statistic, Split};
pub use tree::{fit_survival_tree, SurvivalTree, TreeOptions};

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::curves::StepCurve;
use crate::data::{SurvivalDataset, SurvivalRecord};
use crate::error::{Error, Result};

/// A base learner and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    SurvivalTree {
        #[serde(default = "defaults::max_depth")]
        max_depth: usize,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
    },
    RandomSurvivalForest {
        #[serde(default = "defaults::n_trees")]
        n_trees: usize,
        /// Features tried per node; `None` means `ceil(sqrt(p))`.
        #[serde(default)]
        mtry: Option<usize>,
        #[serde(default = "defaults::min_leaf")]
        min_leaf: usize,
        #[serde(default)]
        max_depth: Option<usize>,
        #[serde(default = "defaults::bootstrap")]
        bootstrap: bool,
        #[serde(default)]
        seed: u64,
    },
    /// `lambda: None` selects the penalty by cross-validated partial likelihood.
    CoxRidge {
        #[serde(default)]
        lambda: Option<f64>,
    },
    CoxLasso {
        #[serde(default)]
        lambda: Option<f64>,
    },
    /// `k: None` means `ceil(sqrt(n))`.
    KnnSurvival {
        #[serde(default)]
        k: Option<usize>,
    },
}

mod defaults {
    pub fn max_depth() -> usize {
        10
    }
    pub fn min_leaf() -> usize {
        15
    }
    pub fn n_trees() -> usize {
        100
    }
    pub fn bootstrap() -> bool {
        true
    }
}

impl LearnerSpec {
    pub fn survival_tree() -> Self {
        LearnerSpec::SurvivalTree { max_depth: defaults::max_depth(), min_leaf: defaults::min_leaf() }
    }

    pub fn random_survival_forest(seed: u64) -> Self {
        LearnerSpec::RandomSurvivalForest {
            n_trees: defaults::n_trees(),
            mtry: None,
            min_leaf: defaults::min_leaf(),
            max_depth: None,
            bootstrap: true,
            seed,
        }
    }

    /// Tree, forest, lasso Cox, ridge Cox and k-NN with default settings.
    pub fn default_roster(seed: u64) -> Vec<LearnerSpec> {
        vec![
            Self::survival_tree(),
            Self::random_survival_forest(seed),
            LearnerSpec::CoxLasso { lambda: None },
            LearnerSpec::CoxRidge { lambda: None },
            LearnerSpec::KnnSurvival { k: None },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::SurvivalTree { .. } => "survival_tree",
            LearnerSpec::RandomSurvivalForest { .. } => "random_survival_forest",
            LearnerSpec::CoxRidge { .. } => "cox_ridge",
            LearnerSpec::CoxLasso { .. } => "cox_lasso",
            LearnerSpec::KnnSurvival { .. } => "knn_survival",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            LearnerSpec::SurvivalTree { min_leaf, .. } if min_leaf == 0 => bad("min_leaf must be at least 1".into()),
            LearnerSpec::RandomSurvivalForest { n_trees, min_leaf, mtry, .. } => {
                if n_trees == 0 {
                    bad("n_trees must be at least 1".into())
                } else if min_leaf == 0 {
                    bad("min_leaf must be at least 1".into())
                } else if mtry == Some(0) {
                    bad("mtry must be at least 1".into())
                } else {
                    Ok(())
                }
            }
            LearnerSpec::CoxRidge { lambda: Some(l) } | LearnerSpec::CoxLasso { lambda: Some(l) }
                if !(l >= 0.0 && l.is_finite()) =>
            {
                bad(format!("penalty must be finite and nonnegative, got {l}"))
            }
            LearnerSpec::KnnSurvival { k: Some(0) } => bad("k must be at least 1".into()),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Tree(SurvivalTree),
    Forest(RandomSurvivalForest),
    Cox(CoxModel),
    Knn(KnnSurvival),
}

/// A trained base learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLearner {
    pub spec: LearnerSpec,
    pub n_features: usize,
    pub model: FittedModel,
}

/// Fits `spec` on `data`. Records are put in a canonical order first, so the
/// result does not depend on the input order.
pub fn fit(spec: &LearnerSpec, data: &SurvivalDataset) -> Result<FittedLearner> {
    spec.validate()?;
    let data = canonical_order(data);
    let model = match *spec {
        LearnerSpec::SurvivalTree { max_depth, min_leaf } => {
            FittedModel::Tree(fit_survival_tree(&data, &TreeOptions { max_depth, min_leaf, mtry: None })?)
        }
        LearnerSpec::RandomSurvivalForest { n_trees, mtry, min_leaf, max_depth, bootstrap, seed } => {
            FittedModel::Forest(fit_random_survival_forest(
                &data,
                &ForestOptions { n_trees, mtry, min_leaf, max_depth, bootstrap, seed },
            )?)
        }
        LearnerSpec::CoxRidge { lambda } => {
            FittedModel::Cox(fit_cox(&data, PenaltyKind::Ridge, lambda, &CoxOptions::default())?)
        }
        LearnerSpec::CoxLasso { lambda } => {
            FittedModel::Cox(fit_cox(&data, PenaltyKind::Lasso, lambda, &CoxOptions::default())?)
        }
        LearnerSpec::KnnSurvival { k } => FittedModel::Knn(fit_knn_survival(&data, k)?),
    };
    Ok(FittedLearner { spec: spec.clone(), n_features: data.n_features(), model })
}

impl FittedLearner {
    pub fn predict_curve(&self, x: &[f64]) -> Result<StepCurve> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: x.len() });
        }
        Ok(match &self.model {
            FittedModel::Tree(m) => m.predict(x).clone(),
            FittedModel::Forest(m) => m.predict(x),
            FittedModel::Cox(m) => m.predict(x),
            FittedModel::Knn(m) => m.predict(x),
        })
    }
}

fn record_cmp(a: &SurvivalRecord, b: &SurvivalRecord) -> Ordering {
    a.time
        .total_cmp(&b.time)
        .then(b.event.cmp(&a.event))
        .then_with(|| {
            a.covariates
                .iter()
                .zip(&b.covariates)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

fn canonical_order(data: &SurvivalDataset) -> SurvivalDataset {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let recs = data.records();
    idx.sort_by(|&a, &b| record_cmp(&recs[a], &recs[b]));
    data.subset(&idx)
}

/// Column means and standard deviations of a training matrix; constant
/// columns get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]> + Clone, p: usize) -> Self {
        let mut n = 0usize;
        let mut means = vec![0.0; p];
        for r in rows.clone() {
            n += 1;
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        let nf = n.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= nf);
        let mut vars = vec![0.0; p];
        for r in rows {
            for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = vars
            .into_iter()
            .map(|s| {
                let sd = (s / nf).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Self { means, scales }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.means).zip(&self.scales).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::kaplan_meier;

    fn toy() -> SurvivalDataset {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 7) as f64, (i % 3) as f64]).collect();
        let t: Vec<f64> = (0..40).map(|i| 1.0 + ((i * 13) % 17) as f64).collect();
        let e: Vec<bool> = (0..40).map(|i| i % 4 != 0).collect();
        SurvivalDataset::from_columns(x, &t, &e).unwrap()
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = fit(&LearnerSpec::KnnSurvival { k: Some(3) }, &toy()).unwrap();
        assert!(matches!(m.predict_curve(&[1.0]), Err(Error::DimensionMismatch { expected: 2, actual: 1 })));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let d = toy();
        assert!(fit(&LearnerSpec::KnnSurvival { k: Some(0) }, &d).is_err());
        assert!(fit(&LearnerSpec::CoxRidge { lambda: Some(-1.0) }, &d).is_err());
        assert!(fit(&LearnerSpec::SurvivalTree { max_depth: 3, min_leaf: 0 }, &d).is_err());
        let forest = LearnerSpec::RandomSurvivalForest {
            n_trees: 0,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        };
        assert!(fit(&forest, &d).is_err());
    }

    #[test]
    fn knn_with_all_neighbors_is_population_km() {
        let d = toy();
        let m = fit(&LearnerSpec::KnnSurvival { k: Some(d.len()) }, &d).unwrap();
        let km = kaplan_meier(&d.times(), &d.events()).unwrap();
        for x in [[0.0, 0.0], [3.0, 1.0], [100.0, -5.0]] {
            assert_eq!(m.predict_curve(&x).unwrap(), km);
        }
    }

    #[test]
    fn default_roster_names() {
        let names: Vec<&str> = LearnerSpec::default_roster(3).iter().map(LearnerSpec::name).collect();
        assert_eq!(names, ["survival_tree", "random_survival_forest", "cox_lasso", "cox_ridge", "knn_survival"]);
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(s.means, vec![2.0, 5.0]);
        assert_eq!(s.scales, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[3.0, 5.0]), vec![1.0, 0.0]);
    }
}
