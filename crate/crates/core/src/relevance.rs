//! Covariate relevance: logistic regression of the proximity indicator
//! `Γ(x; X_j)` on the calibration covariates, aggregated over query points.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cobra::{fit_cobra, CobraModel, CobraParams};
use crate::data::{generate_synthetic, SurvivalDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::learners::cox::solve_spd;
use crate::learners::{LearnerSpec, Standardizer};
use crate::seed::{derive_seed, rng, STREAM_COBRA_SPLIT, STREAM_QUERIES};
use crate::tuning::{random_search, Objective, SearchOutcome, SearchSpace};

pub const DEFAULT_L2: f64 = 1e-4;
const MAX_ITER: usize = 50;
const TOL: f64 = 1e-8;

/// Output of [`fit_logistic`]: `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Penalized log-likelihood after each accepted step, starting at zero coefficients.
    pub objective_trace: Vec<f64>,
}

fn design_rows(features: &[Vec<f64>]) -> Result<usize> {
    let p = features.first().map_or(0, Vec::len);
    if let Some(r) = features.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, actual: r.len() });
    }
    Ok(p)
}

fn linear(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized Bernoulli log-likelihood; the intercept is not penalized.
pub fn logistic_objective(features: &[Vec<f64>], labels: &[bool], l2: f64, beta: &[f64]) -> f64 {
    let ll: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let eta = linear(beta, x);
            if y { -log1p_exp(-eta) } else { -log1p_exp(eta) }
        })
        .sum();
    ll - 0.5 * l2 * beta[1..].iter().map(|b| b * b).sum::<f64>()
}

/// Gradient of [`logistic_objective`].
pub fn logistic_gradient(features: &[Vec<f64>], labels: &[bool], l2: f64, beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; beta.len()];
    for (x, &y) in features.iter().zip(labels) {
        let r = f64::from(u8::from(y)) - sigmoid(linear(beta, x));
        g[0] += r;
        for (gj, v) in g[1..].iter_mut().zip(x) {
            *gj += r * v;
        }
    }
    for (gj, b) in g[1..].iter_mut().zip(&beta[1..]) {
        *gj -= l2 * b;
    }
    g
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Ridge-penalized logistic regression by iteratively reweighted least squares
/// with step halving.
pub fn fit_logistic(features: &[Vec<f64>], labels: &[bool], l2: f64) -> Result<LogisticFit> {
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: features.len(), actual: labels.len() });
    }
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("l2 must be nonnegative, got {l2}")));
    }
    let p = design_rows(features)?;
    let q = p + 1;
    let mut beta = vec![0.0; q];
    let mut value = logistic_objective(features, labels, l2, &beta);
    let mut trace = vec![value];
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let grad = logistic_gradient(features, labels, l2, &beta);
        let mut info = vec![0.0; q * q];
        for x in features {
            let pr = sigmoid(linear(&beta, x));
            let w = pr * (1.0 - pr);
            let z: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            for a in 0..q {
                let wa = w * z[a];
                for b in a..q {
                    info[a * q + b] += wa * z[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                info[a * q + b] = info[b * q + a];
            }
            if a > 0 {
                info[a * q + a] += l2;
            }
        }
        let step = DVector::from_vec(solve_spd(&info, 0.0, &grad));
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let v = logistic_objective(features, labels, l2, &cand);
            if v >= value {
                accepted = Some((cand, v));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };
        let change = cand.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = cand;
        value = v;
        trace.push(v);
        if change < TOL {
            break;
        }
    }
    if l2 == 0.0 && separated(features, labels, &beta) {
        return Err(Error::Separation);
    }
    Ok(LogisticFit { coefficients: beta, iterations, objective_trace: trace })
}

fn separated(features: &[Vec<f64>], labels: &[bool], beta: &[f64]) -> bool {
    let all_same = labels.iter().all(|&y| y == labels[0]);
    let fitted = features.iter().zip(labels).all(|(x, &y)| {
        let pr = sigmoid(linear(beta, x));
        if y { pr > 1.0 - 1e-6 } else { pr < 1e-6 }
    });
    all_same || fitted || beta.iter().any(|b| !b.is_finite())
}

/// Coefficients for one query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRelevance {
    /// `β₀…β_p` on standardized covariates.
    pub coefficients: Vec<f64>,
    /// Labels were constant; slopes are reported as zero.
    pub degenerate: bool,
    pub proximal_count: usize,
}

/// Standardized calibration covariates, shared across queries.
fn calibration_features(model: &CobraModel) -> Vec<Vec<f64>> {
    let cal = model.calibration();
    let st = Standardizer::fit(cal.records().iter().map(|r| r.covariates.as_slice()), cal.n_features());
    cal.records().iter().map(|r| st.transform(&r.covariates)).collect()
}

fn relevance_from_features(model: &CobraModel, features: &[Vec<f64>], x: &[f64], l2: f64) -> Result<QueryRelevance> {
    let labels = model.gamma(x)?;
    let proximal_count = labels.iter().filter(|&&g| g).count();
    if proximal_count == 0 || proximal_count == labels.len() {
        return Ok(QueryRelevance {
            coefficients: vec![0.0; model.calibration().n_features() + 1],
            degenerate: true,
            proximal_count,
        });
    }
    let fit = fit_logistic(features, &labels, l2)?;
    Ok(QueryRelevance { coefficients: fit.coefficients, degenerate: false, proximal_count })
}

/// Regresses `Γ(x; X_j)` over the calibration set on the standardized `X_j`.
pub fn relevance_for_query(model: &CobraModel, x: &[f64], l2: f64) -> Result<QueryRelevance> {
    relevance_from_features(model, &calibration_features(model), x, l2)
}

/// Per-query coefficients plus their aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub feature_names: Vec<String>,
    pub per_query: Vec<QueryRelevance>,
    /// Mean `|β_j|` over non-degenerate queries, one entry per covariate.
    pub aggregate: Vec<f64>,
    /// Number of non-degenerate queries in the aggregate.
    pub query_count: usize,
}

impl RelevanceResult {
    /// Covariate indices by decreasing aggregate score; ties keep column order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.aggregate.len()).collect();
        idx.sort_by(|&a, &b| self.aggregate[b].total_cmp(&self.aggregate[a]).then(a.cmp(&b)));
        idx
    }

    /// 1-based rank of each covariate.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.aggregate.len()];
        for (r, i) in self.ranking().into_iter().enumerate() {
            ranks[i] = r + 1;
        }
        ranks
    }

    /// Whether every covariate in `relevant` scores above every covariate outside it.
    pub fn separates(&self, relevant: &[usize]) -> bool {
        let (inside, outside): (Vec<_>, Vec<_>) =
            (0..self.aggregate.len()).partition(|i| relevant.contains(i));
        let lo = inside.iter().map(|&i| self.aggregate[i]).fold(f64::INFINITY, f64::min);
        let hi = outside.iter().map(|&i| self.aggregate[i]).fold(f64::NEG_INFINITY, f64::max);
        lo > hi
    }
}

pub fn relevance_study(model: &CobraModel, queries: &[Vec<f64>], l2: f64) -> Result<RelevanceResult> {
    if queries.is_empty() {
        return Err(Error::EmptyInput);
    }
    let features = calibration_features(model);
    let per_query = queries
        .par_iter()
        .map(|x| relevance_from_features(model, &features, x, l2))
        .collect::<Result<Vec<_>>>()?;
    let used: Vec<&QueryRelevance> = per_query.iter().filter(|q| !q.degenerate).collect();
    if used.is_empty() {
        return Err(Error::AllQueriesDegenerate);
    }
    let p = model.calibration().n_features();
    let aggregate = (0..p)
        .map(|j| used.iter().map(|q| q.coefficients[j + 1].abs()).sum::<f64>() / used.len() as f64)
        .collect();
    let query_count = used.len();
    Ok(RelevanceResult {
        feature_names: model.calibration().feature_names().to_vec(),
        per_query,
        aggregate,
        query_count,
    })
}

/// Settings shared by every relevance study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    /// Records held out of training and used as query points.
    pub queries: usize,
    pub trials: usize,
    pub inner_folds: usize,
    pub objective: Objective,
    pub l2: f64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { queries: 100, trials: 200, inner_folds: 3, objective: Objective::NegConcordance, l2: DEFAULT_L2 }
    }
}

/// A relevance study on freshly generated synthetic data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub synthetic: SyntheticConfig,
    pub study: StudyOptions,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub train: SurvivalDataset,
    pub queries: SurvivalDataset,
    /// Absent when the parameters were fixed.
    pub search: Option<SearchOutcome>,
    pub model: CobraModel,
    pub relevance: RelevanceResult,
}

/// Holds out `opts.queries` records, fits the ensemble on the rest (tuning
/// `(ε, α, l/n)` unless `fixed` is given) and scores relevance at the held-out points.
pub fn run_study(
    data: &SurvivalDataset,
    opts: &StudyOptions,
    roster: &[LearnerSpec],
    fixed: Option<(f64, f64, f64)>,
    seed: u64,
) -> Result<StudyOutcome> {
    if opts.queries == 0 || opts.queries >= data.len() {
        return Err(Error::InvalidParameter(format!("cannot hold out {} of {} records", opts.queries, data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng(derive_seed(seed, STREAM_QUERIES, 0)));
    let (held, rest) = order.split_at(opts.queries);
    let mut held = held.to_vec();
    let mut rest = rest.to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    let queries = data.subset(&held);
    let train = data.subset(&rest);
    let (params, split_seed, search) = match fixed {
        Some((epsilon, alpha, l_fraction)) => {
            let p = CobraParams { epsilon, alpha, l_fraction, roster: roster.to_vec() };
            (p, derive_seed(seed, STREAM_COBRA_SPLIT, 0), None)
        }
        None => {
            let space = SearchSpace::for_roster(roster.len(), opts.trials, opts.objective, seed);
            let search = random_search(&space, roster, &train, opts.inner_folds)?;
            (search.best.params.clone(), search.split_seed, Some(search))
        }
    };
    let model = fit_cobra(&train, &params, split_seed)?;
    let points: Vec<Vec<f64>> = queries.records().iter().map(|r| r.covariates.clone()).collect();
    let relevance = relevance_study(&model, &points, opts.l2)?;
    Ok(StudyOutcome { train, queries, search, model, relevance })
}

/// Generates the synthetic population and runs a tuned [`run_study`] on it.
pub fn run_simulation(cfg: &SimulationConfig, roster: &[LearnerSpec]) -> Result<StudyOutcome> {
    let data = generate_synthetic(&cfg.synthetic)?;
    run_study(&data, &cfg.study, roster, None, cfg.synthetic.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let y = x.iter().map(|row| r.random::<f64>() < sigmoid(0.3 + row[0])).collect();
        (x, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let (x, y) = random_problem(seed, 40, 3);
            let beta = [0.2, -0.5, 0.7, 0.1];
            let g = logistic_gradient(&x, &y, 0.3, &beta);
            for k in 0..4 {
                let h = 1e-5;
                let mut up = beta;
                let mut dn = beta;
                up[k] += h;
                dn[k] -= h;
                let fd = (logistic_objective(&x, &y, 0.3, &up) - logistic_objective(&x, &y, 0.3, &dn)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "{fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn converged_fit_zeroes_gradient_and_trace_increases() {
        let (x, y) = random_problem(1, 300, 3);
        let fit = fit_logistic(&x, &y, 1e-4).unwrap();
        let g = logistic_gradient(&x, &y, 1e-4, &fit.coefficients);
        assert!(g.iter().all(|v| v.abs() < 1e-6));
        assert!(fit.objective_trace.windows(2).all(|w| w[1] >= w[0]));
        assert!((fit.coefficients[1] - 1.0).abs() < 0.5);
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let (x, y) = random_problem(2, 100, 2);
        let mut xs = x.clone();
        let mut ys = y.clone();
        xs.extend(x.iter().map(|r| r.iter().map(|v| -v).collect::<Vec<_>>()));
        ys.extend(y.iter().map(|v| !v));
        let fit = fit_logistic(&xs, &ys, 0.0).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-6);
    }

    #[test]
    fn separation_needs_penalty() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<bool> = (0..20).map(|i| i >= 10).collect();
        assert!(matches!(fit_logistic(&x, &y, 0.0), Err(Error::Separation)));
        let fit = fit_logistic(&x, &y, 1e-2).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
        assert!(matches!(fit_logistic(&x, &[true; 20], 0.0), Err(Error::Separation)));
    }

    #[test]
    fn duplicated_column_shares_weight() {
        let (x, y) = random_problem(3, 200, 2);
        let dup: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[0], r[1]]).collect();
        let fit = fit_logistic(&dup, &y, 1e-2).unwrap();
        assert!((fit.coefficients[1] - fit.coefficients[2]).abs() < 1e-4);
    }

    #[test]
    fn null_slopes_within_three_standard_errors() {
        let mut slopes = Vec::new();
        for seed in 0..200 {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x: Vec<Vec<f64>> = (0..200).map(|_| vec![r.random_range(-1.0..1.0)]).collect();
            let y: Vec<bool> = (0..200).map(|_| r.random_bool(0.5)).collect();
            slopes.push(fit_logistic(&x, &y, 0.0).unwrap().coefficients[1]);
        }
        let n = slopes.len() as f64;
        let mean = slopes.iter().sum::<f64>() / n;
        let sd = (slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * sd / n.sqrt());
    }

    fn small_model(epsilon: f64, alpha: f64) -> (CobraModel, SurvivalDataset) {
        let data = generate_synthetic(&SyntheticConfig { n: 200, censor_fraction: 0.3, dim: 5, seed: 4 }).unwrap();
        let roster = vec![LearnerSpec::SurvivalTree { max_depth: 4, min_leaf: 10 }, LearnerSpec::KnnSurvival { k: Some(8) }];
        let params = CobraParams { epsilon, alpha, l_fraction: 0.5, roster };
        (fit_cobra(&data, &params, 1).unwrap(), data)
    }

    #[test]
    fn saturated_epsilon_is_degenerate() {
        let (m, d) = small_model(0.95, 0.5);
        let r = relevance_for_query(&m, &d.records()[0].covariates, DEFAULT_L2).unwrap();
        assert!(r.degenerate);
        assert!(r.coefficients.iter().all(|&b| b == 0.0));
        let q = vec![d.records()[0].covariates.clone()];
        assert!(matches!(relevance_study(&m, &q, DEFAULT_L2), Err(Error::AllQueriesDegenerate)));
    }

    #[test]
    fn study_shapes_and_repeatability() {
        let (m, d) = small_model(0.02, 0.5);
        let x = d.records()[5].covariates.clone();
        let r = relevance_study(&m, &[x.clone(), x.clone(), x], DEFAULT_L2).unwrap();
        assert_eq!(r.aggregate.len(), 5);
        assert!(r.aggregate.iter().all(|&a| a >= 0.0 && a.is_finite()));
        assert_eq!(r.per_query[0], r.per_query[1]);
        assert_eq!(r.per_query[1], r.per_query[2]);
        let mut ranks = r.ranks();
        ranks.sort_unstable();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn fixed_study_holds_out_queries() {
        let data = generate_synthetic(&SyntheticConfig { n: 220, censor_fraction: 0.3, dim: 5, seed: 2 }).unwrap();
        let roster = vec![LearnerSpec::SurvivalTree { max_depth: 4, min_leaf: 10 }, LearnerSpec::KnnSurvival { k: Some(8) }];
        let opts = StudyOptions { queries: 20, ..StudyOptions::default() };
        let out = run_study(&data, &opts, &roster, Some((0.02, 0.5, 0.5)), 7).unwrap();
        assert_eq!(out.queries.len(), 20);
        assert_eq!(out.train.len(), 200);
        assert!(out.search.is_none());
        assert_eq!(out.relevance.per_query.len(), 20);
        let again = run_study(&data, &opts, &roster, Some((0.02, 0.5, 0.5)), 7).unwrap();
        assert_eq!(out.relevance, again.relevance);
        assert!(run_study(&data, &StudyOptions { queries: 220, ..opts }, &roster, None, 7).is_err());
    }

    #[test]
    fn labels_follow_feature_permutation() {
        let (m, d) = small_model(0.02, 0.5);
        let features = calibration_features(&m);
        let x = d.records()[9].covariates.clone();
        let labels = m.gamma(&x).unwrap();
        assert!(labels.iter().any(|&g| g) && labels.iter().any(|&g| !g));
        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<Vec<f64>> = features.iter().map(|r| perm.iter().map(|&k| r[k]).collect()).collect();
        let a = fit_logistic(&features, &labels, DEFAULT_L2).unwrap().coefficients;
        let b = fit_logistic(&permuted, &labels, DEFAULT_L2).unwrap().coefficients;
        assert!((a[0] - b[0]).abs() < 1e-8);
        for (i, &k) in perm.iter().enumerate() {
            assert!((a[k + 1] - b[i + 1]).abs() < 1e-8);
        }
    }
}
