//! Seeded random search over `(ε, α, l/n)` scored by inner cross-validation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cobra::{fit_cobra, CobraParams};
use crate::curves::StepCurve;
use crate::data::{kfold_indices, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::metrics::{concordance_td, event_time_grid, integrated_brier};
use crate::seed::{derive_seed, rng, STREAM_COBRA_SPLIT, STREAM_INNER_FOLDS, STREAM_SEARCH};

/// Quantity minimized by the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Ibs,
    NegConcordance,
}

impl Objective {
    /// Scores predicted curves against observed outcomes; lower is better.
    pub fn score(self, curves: &[StepCurve], times: &[f64], events: &[bool]) -> Result<f64> {
        match self {
            Objective::Ibs => integrated_brier(curves, times, events, &event_time_grid(times, events)),
            Objective::NegConcordance => concordance_td(curves, times, events).map(|c| -c),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Ibs => "ibs",
            Objective::NegConcordance => "neg_concordance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Log-uniform bounds on `ε`.
    pub epsilon_range: (f64, f64),
    pub alpha_choices: Vec<f64>,
    pub l_fraction_choices: Vec<f64>,
    pub trials: usize,
    pub objective: Objective,
    pub seed: u64,
}

impl SearchSpace {
    /// `ε ∈ [1e-300, 0.9]`, `α ∈ {1/M, …, M/M}`, `l/n ∈ {0.1, …, 0.9}`.
    pub fn for_roster(machines: usize, trials: usize, objective: Objective, seed: u64) -> Self {
        Self {
            epsilon_range: (1e-300, 0.9),
            alpha_choices: (1..=machines).map(|i| i as f64 / machines as f64).collect(),
            l_fraction_choices: (1..=9).map(|i| i as f64 / 10.0).collect(),
            trials,
            objective,
            seed,
        }
    }

    /// The five-machine space.
    pub fn standard(trials: usize, objective: Objective, seed: u64) -> Self {
        Self::for_roster(5, trials, objective, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        let (lo, hi) = self.epsilon_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("epsilon_range must satisfy 0 < lo <= hi");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.alpha_choices.is_empty() || self.alpha_choices.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("alpha_choices must be non-empty and lie in (0, 1]");
        }
        if self.l_fraction_choices.is_empty() || self.l_fraction_choices.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return bad("l_fraction_choices must be non-empty and lie in (0, 1)");
        }
        Ok(())
    }

    /// The `(ε, α, l/n)` triples of every trial, in trial order.
    pub fn draw(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.validate()?;
        let mut r = rng(derive_seed(self.seed, STREAM_SEARCH, 0));
        let (lo, hi) = (self.epsilon_range.0.ln(), self.epsilon_range.1.ln());
        Ok((0..self.trials)
            .map(|_| {
                let u: f64 = r.random();
                let eps = (lo + u * (hi - lo)).exp().clamp(self.epsilon_range.0, self.epsilon_range.1);
                let a = self.alpha_choices[r.random_range(0..self.alpha_choices.len())];
                let l = self.l_fraction_choices[r.random_range(0..self.l_fraction_choices.len())];
                (eps, a, l)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub params: CobraParams,
    /// Mean of `fold_values`; `+∞` when the trial failed.
    pub objective_value: f64,
    pub fold_values: Vec<f64>,
    pub error: Option<String>,
}

impl TrialResult {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.objective_value.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: TrialResult,
    pub trace: Vec<TrialResult>,
    /// Seed of the calibration split inside every inner fold; reuse it to refit the winner.
    pub split_seed: u64,
}

impl SearchOutcome {
    /// Best objective after each trial.
    pub fn running_best(&self) -> Vec<f64> {
        self.trace
            .iter()
            .scan(f64::INFINITY, |best, t| {
                if t.succeeded() && t.objective_value < *best {
                    *best = t.objective_value;
                }
                Some(*best)
            })
            .collect()
    }
}

struct InnerFold {
    train: SurvivalDataset,
    queries: Vec<Vec<f64>>,
    times: Vec<f64>,
    events: Vec<bool>,
}

fn inner_folds(train: &SurvivalDataset, folds: usize, seed: u64) -> Result<Vec<InnerFold>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("inner_folds must be at least 2, got {folds}")));
    }
    let parts = kfold_indices(train.len(), folds, derive_seed(seed, STREAM_INNER_FOLDS, 0))?;
    Ok(parts
        .iter()
        .map(|val| {
            let rest: Vec<usize> = (0..train.len()).filter(|i| val.binary_search(i).is_err()).collect();
            let v = train.subset(val);
            InnerFold {
                train: train.subset(&rest),
                queries: v.records().iter().map(|r| r.covariates.clone()).collect(),
                times: v.times(),
                events: v.events(),
            }
        })
        .collect())
}

/// Scores every trial on every fold under each objective. Machines are fit
/// once per `(fold, l/n)` and the distance table and predicted curves are
/// shared by all trials and objectives using them.
fn evaluate_trials(trials: &[CobraParams], folds: &[InnerFold], objectives: &[Objective], split_seed: u64) -> Vec<Vec<TrialResult>> {
    type Scores = std::result::Result<Vec<f64>, String>;
    let mut fold_values: Vec<Vec<Scores>> = vec![Vec::with_capacity(folds.len()); trials.len()];
    let mut l_values: Vec<f64> = trials.iter().map(|p| p.l_fraction).collect();
    l_values.sort_by(f64::total_cmp);
    l_values.dedup();
    for fold in folds {
        let mut per_trial: Vec<Option<Scores>> = vec![None; trials.len()];
        for &l in &l_values {
            let members: Vec<usize> = (0..trials.len()).filter(|&t| trials[t].l_fraction == l).collect();
            let base = trials[members[0]].clone();
            let table = fit_cobra(&fold.train, &base, split_seed).and_then(|m| {
                let d = m.distance_table(&fold.queries)?;
                Ok((m, d))
            });
            match table {
                Ok((model, dist)) => {
                    let scores: Vec<Scores> = members
                        .par_iter()
                        .map(|&t| {
                            let p = &trials[t];
                            let curves: Vec<StepCurve> =
                                dist.iter().map(|row| model.predict_from_distances(row, p.epsilon, p.alpha)).collect();
                            objectives
                                .iter()
                                .map(|o| o.score(&curves, &fold.times, &fold.events).map_err(|e| e.to_string()))
                                .collect()
                        })
                        .collect();
                    for (&t, s) in members.iter().zip(scores) {
                        per_trial[t] = Some(s);
                    }
                }
                Err(e) => {
                    for &t in &members {
                        per_trial[t] = Some(Err(e.to_string()));
                    }
                }
            }
        }
        for (acc, v) in fold_values.iter_mut().zip(per_trial) {
            acc.push(v.expect("every trial belongs to one l group"));
        }
    }
    (0..objectives.len())
        .map(|o| {
            trials
                .iter()
                .zip(&fold_values)
                .enumerate()
                .map(|(i, (p, vals))| {
                    match vals.iter().map(|v| v.as_ref().map(|s| s[o]).map_err(Clone::clone)).collect::<std::result::Result<Vec<f64>, String>>() {
                        Ok(v) => TrialResult {
                            trial: i,
                            params: p.clone(),
                            objective_value: v.iter().sum::<f64>() / v.len() as f64,
                            fold_values: v,
                            error: None,
                        },
                        Err(e) => TrialResult {
                            trial: i,
                            params: p.clone(),
                            objective_value: f64::INFINITY,
                            fold_values: Vec::new(),
                            error: Some(e),
                        },
                    }
                })
                .collect()
        })
        .collect()
}

fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, STREAM_COBRA_SPLIT, 0)
}

/// Draws `space.trials` parameter triples, scores each by `inner_folds`-fold
/// cross-validation on `train` and returns the lowest mean objective; ties go
/// to the earlier trial.
pub fn random_search(
    space: &SearchSpace,
    roster: &[LearnerSpec],
    train: &SurvivalDataset,
    inner_folds_count: usize,
) -> Result<SearchOutcome> {
    Ok(random_search_multi(space, roster, train, inner_folds_count, &[space.objective])?.remove(0))
}

/// [`random_search`] over the same trials for several objectives at once;
/// one outcome per objective, in order. `space.objective` is ignored.
pub fn random_search_multi(
    space: &SearchSpace,
    roster: &[LearnerSpec],
    train: &SurvivalDataset,
    inner_folds_count: usize,
    objectives: &[Objective],
) -> Result<Vec<SearchOutcome>> {
    let trials: Vec<CobraParams> = space
        .draw()?
        .into_iter()
        .map(|(epsilon, alpha, l_fraction)| CobraParams { epsilon, alpha, l_fraction, roster: roster.to_vec() })
        .collect();
    for p in &trials {
        p.validate()?;
    }
    let folds = inner_folds(train, inner_folds_count, space.seed)?;
    let seed = split_seed(space.seed);
    evaluate_trials(&trials, &folds, objectives, seed).into_iter().map(|trace| select_best(trace, seed)).collect()
}

fn select_best(trace: Vec<TrialResult>, split_seed: u64) -> Result<SearchOutcome> {
    let best = trace
        .iter()
        .filter(|t| t.succeeded())
        .fold(None::<&TrialResult>, |b, t| match b {
            Some(b) if b.objective_value <= t.objective_value => Some(b),
            _ => Some(t),
        })
        .cloned();
    match best {
        Some(best) => Ok(SearchOutcome { best, trace, split_seed }),
        None => Err(Error::AllTrialsFailed(
            trace.iter().filter_map(|t| t.error.as_deref()).next().unwrap_or("no trial succeeded").to_string(),
        )),
    }
}

/// Inner cross-validation score of fixed parameters, using the folds and
/// calibration splits [`random_search`] would use for the same `seed`.
pub fn evaluate_params(
    params: &CobraParams,
    train: &SurvivalDataset,
    inner_folds_count: usize,
    objective: Objective,
    seed: u64,
) -> Result<TrialResult> {
    params.validate()?;
    let folds = inner_folds(train, inner_folds_count, seed)?;
    let r = evaluate_trials(std::slice::from_ref(params), &folds, &[objective], split_seed(seed)).remove(0).remove(0);
    match &r.error {
        Some(e) => Err(Error::AllTrialsFailed(e.clone())),
        None => Ok(r),
    }
}

/// Fold scores for explicit validation index sets.
pub fn evaluate_params_on_folds(
    params: &CobraParams,
    train: &SurvivalDataset,
    validation: &[Vec<usize>],
    objective: Objective,
    seed: u64,
) -> Result<TrialResult> {
    params.validate()?;
    let folds: Vec<InnerFold> = validation
        .iter()
        .map(|val| {
            let rest: Vec<usize> = (0..train.len()).filter(|i| !val.contains(i)).collect();
            let v = train.subset(val);
            InnerFold {
                train: train.subset(&rest),
                queries: v.records().iter().map(|r| r.covariates.clone()).collect(),
                times: v.times(),
                events: v.events(),
            }
        })
        .collect();
    let r = evaluate_trials(std::slice::from_ref(params), &folds, &[objective], split_seed(seed)).remove(0).remove(0);
    match &r.error {
        Some(e) => Err(Error::AllTrialsFailed(e.clone())),
        None => Ok(r),
    }
}
