//! The four subcommands. Each returns its report files without touching disk.

use serde_json::json;
use survcobra::cobra::fit_cobra;
use survcobra::data::kfold_indices;
use survcobra::learners::fit;
use survcobra::metrics::{concordance_td, d_calibration, event_time_grid, integrated_brier, DCAL_BINS, DCAL_LEVEL};
use survcobra::relevance::{run_study, StudyOptions, StudyOutcome};
use survcobra::seed::{derive_seed, STREAM_COBRA_SPLIT, STREAM_OUTER_FOLDS, STREAM_SEARCH};
use survcobra::tuning::{random_search, random_search_multi, Objective, SearchOutcome, TrialResult};
use survcobra::{CobraParams, MetricReport, StepCurve, SurvivalDataset};

use crate::config::{ExperimentConfig, ParamSource};
use crate::error::CliError;
use crate::output::{curve_rows, header, mean_sd, num, Outputs};

pub const PROPOSED: &str = "proposed";

/// One row of the benchmark: a model scored on one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: String,
    pub report: MetricReport,
}

/// Parameters chosen for the proposed model on one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedFold {
    pub fold: usize,
    pub objective: Objective,
    pub trial: TrialResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub dataset: String,
    pub models: Vec<String>,
    pub rows: Vec<BenchRow>,
    pub tuned: Vec<TunedFold>,
}

fn test_curves(predict: impl Fn(&[f64]) -> survcobra::Result<StepCurve> + Sync, test: &SurvivalDataset) -> survcobra::Result<Vec<StepCurve>> {
    use rayon::prelude::*;
    test.records().par_iter().map(|r| predict(&r.covariates)).collect()
}

fn score(fold: usize, conc_curves: &[StepCurve], curves: &[StepCurve], test: &SurvivalDataset) -> survcobra::Result<MetricReport> {
    let (times, events) = (test.times(), test.events());
    let concordance = concordance_td(conc_curves, &times, &events)?;
    let ibs = integrated_brier(curves, &times, &events, &event_time_grid(&times, &events))?;
    let (dcal_pass, dcal_pvalue) = d_calibration(curves, &times, &events, DCAL_BINS, DCAL_LEVEL)?;
    Ok(MetricReport { fold_id: fold, concordance, ibs, dcal_pass, dcal_pvalue })
}

/// Outer cross-validation of every base learner and the proposed ensemble on
/// shared folds. With a search table, the ensemble is tuned per fold for
/// integrated Brier score (used for the IBS and calibration columns) and for
/// concordance (used for the concordance column).
pub fn run_bench(cfg: &ExperimentConfig) -> Result<BenchResult, CliError> {
    cfg.validate()?;
    let source = cfg.param_source()?;
    let data = cfg.load_dataset()?;
    let roster = cfg.roster();
    let folds = kfold_indices(data.len(), cfg.folds, derive_seed(cfg.seed, STREAM_OUTER_FOLDS, 0))?;
    let mut rows = Vec::new();
    let mut tuned = Vec::new();
    for (f, test_idx) in folds.iter().enumerate() {
        log::info!("fold {} of {}", f + 1, folds.len());
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| test_idx.binary_search(i).is_err()).collect();
        let train = data.subset(&train_idx);
        let test = data.subset(test_idx);
        for spec in &roster {
            let model = fit(spec, &train)?;
            let curves = test_curves(|x| model.predict_curve(x), &test)?;
            rows.push(BenchRow { model: spec.name().to_string(), report: score(f, &curves, &curves, &test)? });
        }
        let report = match &source {
            ParamSource::Fixed(p) => {
                let params = CobraParams { epsilon: p.epsilon, alpha: p.alpha, l_fraction: p.l_fraction, roster: roster.clone() };
                let model = fit_cobra(&train, &params, derive_seed(cfg.seed, STREAM_COBRA_SPLIT, f as u64))?;
                let curves = model.predict_batch(&covariates(&test))?;
                score(f, &curves, &curves, &test)?
            }
            ParamSource::Search(s) => {
                let space = cfg.search_space(s, Objective::Ibs, derive_seed(cfg.seed, STREAM_SEARCH, f as u64));
                let objectives = [Objective::Ibs, Objective::NegConcordance];
                let outcomes = random_search_multi(&space, &roster, &train, s.inner_folds, &objectives)?;
                let mut curves_for = Vec::new();
                for out in &outcomes {
                    let model = fit_cobra(&train, &out.best.params, out.split_seed)?;
                    curves_for.push(model.predict_batch(&covariates(&test))?);
                }
                for (o, out) in objectives.iter().zip(&outcomes) {
                    tuned.push(TunedFold { fold: f, objective: *o, trial: out.best.clone() });
                }
                score(f, &curves_for[1], &curves_for[0], &test)?
            }
        };
        rows.push(BenchRow { model: PROPOSED.to_string(), report });
    }
    let mut models: Vec<String> = roster.iter().map(|s| s.name().to_string()).collect();
    models.push(PROPOSED.to_string());
    Ok(BenchResult { dataset: cfg.dataset_name(), models, rows, tuned })
}

fn covariates(d: &SurvivalDataset) -> Vec<Vec<f64>> {
    d.records().iter().map(|r| r.covariates.clone()).collect()
}

fn per_model_table(res: &BenchResult, folds: usize, get: impl Fn(&MetricReport) -> f64) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = header(&["model", "mean", "std"]);
    head.extend((0..folds).map(|f| format!("fold_{f}")));
    let rows = res
        .models
        .iter()
        .map(|m| {
            let vals: Vec<f64> = res.rows.iter().filter(|r| &r.model == m).map(|r| get(&r.report)).collect();
            let (mean, sd) = mean_sd(&vals);
            let mut row = vec![m.clone(), num(mean), num(sd)];
            row.extend(vals.iter().map(|&v| num(v)));
            row
        })
        .collect();
    (head, rows)
}

pub fn bench_outputs(cfg: &ExperimentConfig, res: &BenchResult) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            vec![
                res.dataset.clone(),
                r.model.clone(),
                r.report.fold_id.to_string(),
                num(r.report.concordance),
                num(r.report.ibs),
                r.report.dcal_pass.to_string(),
                num(r.report.dcal_pvalue),
            ]
        })
        .collect();
    out.add_csv("metrics.csv", &header(&["dataset", "model", "fold", "concordance", "ibs", "dcal_pass", "dcal_pvalue"]), &rows)?;
    let (h, r) = per_model_table(res, cfg.folds, |m| m.concordance);
    out.add_csv("concordance.csv", &h, &r)?;
    let (h, r) = per_model_table(res, cfg.folds, |m| m.ibs);
    out.add_csv("ibs.csv", &h, &r)?;
    let dcal: Vec<Vec<String>> = res
        .models
        .iter()
        .map(|m| {
            let mine: Vec<&BenchRow> = res.rows.iter().filter(|r| &r.model == m).collect();
            let passes = mine.iter().filter(|r| r.report.dcal_pass).count();
            vec![m.clone(), passes.to_string(), mine.len().to_string()]
        })
        .collect();
    out.add_csv("dcalibration.csv", &header(&["model", "passes", "folds"]), &dcal)?;
    if !res.tuned.is_empty() {
        let rows: Vec<Vec<String>> = res
            .tuned
            .iter()
            .map(|t| {
                vec![
                    t.fold.to_string(),
                    t.objective.name().to_string(),
                    num(t.trial.params.epsilon),
                    num(t.trial.params.alpha),
                    num(t.trial.params.l_fraction),
                    num(t.trial.objective_value),
                ]
            })
            .collect();
        out.add_csv("tuned_params.csv", &header(&["fold", "objective", "epsilon", "alpha", "l_fraction", "inner_objective"]), &rows)?;
    }
    out.add_json("run.json", &run_metadata(cfg, "bench", &out))?;
    Ok(out)
}

fn run_metadata(cfg: &ExperimentConfig, command: &str, out: &Outputs) -> serde_json::Value {
    let mut files: Vec<&str> = out.names();
    files.push("run.json");
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "dataset": cfg.dataset_name(),
        "seed": cfg.seed,
        "folds": cfg.folds,
        "roster": cfg.roster(),
        "cobra": cfg.cobra,
        "search": cfg.search,
        "relevance": cfg.relevance,
        "files": files,
    })
}

fn trace_csv(out: &mut Outputs, trace: &[TrialResult]) -> Result<(), CliError> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|t| {
            vec![
                t.trial.to_string(),
                num(t.params.epsilon),
                num(t.params.alpha),
                num(t.params.l_fraction),
                num(t.objective_value),
            ]
        })
        .collect();
    out.add_csv("trace.csv", &header(&["trial", "epsilon", "alpha", "l_fraction", "objective"]), &rows)
}

fn best_params_json(search: &SearchOutcome, objective: Objective) -> serde_json::Value {
    let b = &search.best;
    json!({
        "epsilon": b.params.epsilon,
        "alpha": b.params.alpha,
        "l_fraction": b.params.l_fraction,
        "objective": objective.name(),
        "objective_value": b.objective_value,
        "fold_values": b.fold_values,
        "trial": b.trial,
    })
}

pub fn run_tune(cfg: &ExperimentConfig) -> Result<(SearchOutcome, Objective), CliError> {
    cfg.validate()?;
    let ParamSource::Search(s) = cfg.param_source()? else {
        return Err(CliError::Config("tune needs a [search] table".into()));
    };
    let data = cfg.load_dataset()?;
    let space = cfg.search_space(&s, Objective::Ibs, cfg.seed);
    Ok((random_search(&space, &cfg.roster(), &data, s.inner_folds)?, space.objective))
}

pub fn tune_outputs(cfg: &ExperimentConfig, search: &SearchOutcome, objective: Objective) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    out.add_json("best_params.json", &best_params_json(search, objective))?;
    trace_csv(&mut out, &search.trace)?;
    out.add_json("run.json", &run_metadata(cfg, "tune", &out))?;
    Ok(out)
}

/// Relevance study on the configured data; `synthetic_only` rejects a data file.
pub fn run_relevance(cfg: &ExperimentConfig, synthetic_only: bool) -> Result<StudyOutcome, CliError> {
    cfg.validate()?;
    if synthetic_only && cfg.data.path.is_some() {
        return Err(CliError::Config("simulate generates its own data; use `relevance` for a data file".into()));
    }
    let data = cfg.load_dataset()?;
    let (fixed, opts) = match cfg.param_source()? {
        ParamSource::Fixed(p) => {
            (Some((p.epsilon, p.alpha, p.l_fraction)), StudyOptions { queries: cfg.relevance.queries, l2: cfg.relevance.l2, ..StudyOptions::default() })
        }
        ParamSource::Search(s) => (
            None,
            StudyOptions {
                queries: cfg.relevance.queries,
                trials: s.trials,
                inner_folds: s.inner_folds,
                objective: s.objective.unwrap_or(Objective::NegConcordance),
                l2: cfg.relevance.l2,
            },
        ),
    };
    Ok(run_study(&data, &opts, &cfg.roster(), fixed, cfg.seed)?)
}

/// Number of query curves dumped to `curves.csv`.
pub const CURVE_DUMP: usize = 10;

pub fn relevance_outputs(cfg: &ExperimentConfig, study: &StudyOutcome, command: &str) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let r = &study.relevance;
    let ranks = r.ranks();
    let rows: Vec<Vec<String>> = r
        .feature_names
        .iter()
        .zip(&r.aggregate)
        .zip(&ranks)
        .map(|((n, a), k)| vec![n.clone(), num(*a), k.to_string()])
        .collect();
    out.add_csv("relevance.csv", &header(&["covariate", "aggregate_score", "rank"]), &rows)?;
    let mut head = header(&["query", "degenerate", "proximal_count", "intercept"]);
    head.extend(r.feature_names.iter().cloned());
    let rows: Vec<Vec<String>> = r
        .per_query
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut row = vec![i.to_string(), q.degenerate.to_string(), q.proximal_count.to_string()];
            row.extend(q.coefficients.iter().map(|&b| num(b)));
            row
        })
        .collect();
    out.add_csv("relevance_per_query.csv", &head, &rows)?;
    let mut curve_rows_all = curve_rows("population", study.model.population_curve());
    for (i, rec) in study.queries.records().iter().take(CURVE_DUMP).enumerate() {
        curve_rows_all.extend(curve_rows(&format!("query_{i}"), &study.model.predict(&rec.covariates)?));
    }
    out.add_csv("curves.csv", &header(&["curve", "time", "survival"]), &curve_rows_all)?;
    if let Some(search) = &study.search {
        let objective = cfg.search.as_ref().and_then(|s| s.objective).unwrap_or(Objective::NegConcordance);
        out.add_json("best_params.json", &best_params_json(search, objective))?;
        trace_csv(&mut out, &search.trace)?;
    }
    out.add_json("run.json", &run_metadata(cfg, command, &out))?;
    Ok(out)
}
