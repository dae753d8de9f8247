//! `(ε, α)`-proximity aggregation of base-learner survival curves.
//!
//! The training set is split into `D_k`, on which every machine of the roster
//! is fit, and `D_l`, whose records are aggregated. For a query `x`, record
//! `j ∈ D_l` is proximal when at least `⌈α·M⌉` of the `M` machines put
//! `S_m(·|X_j)` within area distance `ε` of `S_m(·|x)`. The prediction is the
//! Kaplan–Meier estimate over the proximal records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::{kaplan_meier, product_limit, DenseGrid, StepCurve};
use crate::data::{cobra_split, SurvivalDataset};
use crate::error::{Error, Result};
use crate::learners::{fit, FittedLearner, LearnerSpec};

/// Ensemble hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CobraParams {
    /// Distance threshold in curve-area units.
    pub epsilon: f64,
    /// Fraction of machines that must agree; `α·M` must be an integer.
    pub alpha: f64,
    /// Share of the training data held out as the calibration set `D_l`.
    pub l_fraction: f64,
    pub roster: Vec<LearnerSpec>,
}

impl CobraParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.roster.is_empty() {
            return bad("roster is empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        let scaled = self.alpha * self.roster.len() as f64;
        if (scaled - scaled.round()).abs() > 1e-6 {
            return bad(format!("alpha {} is not a multiple of 1/{}", self.alpha, self.roster.len()));
        }
        if !(self.l_fraction > 0.0 && self.l_fraction < 1.0) {
            return bad(format!("l_fraction must lie in (0, 1), got {}", self.l_fraction));
        }
        self.roster.iter().try_for_each(LearnerSpec::validate)
    }

    /// `⌈M·α⌉`, the number of machines that must agree.
    pub fn required_agreement(&self) -> usize {
        required_agreement(self.alpha, self.roster.len())
    }
}

pub(crate) fn required_agreement(alpha: f64, machines: usize) -> usize {
    ((alpha * machines as f64 - 1e-9).ceil() as usize).clamp(1, machines)
}

/// Event times, event counts and risk counts of the proximal calibration records.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityAggregate {
    /// Calibration indices with `Γ = 1`, ascending.
    pub members: Vec<usize>,
    /// Distinct times at which a member had an event, ascending.
    pub event_times: Vec<f64>,
    pub event_counts: Vec<usize>,
    /// Members with `Y ≥ t` at each event time.
    pub risk_counts: Vec<usize>,
    member_times: Vec<f64>,
}

impl ProximityAggregate {
    /// Members with `Y ≥ t`.
    pub fn risk_at(&self, t: f64) -> usize {
        self.member_times.len() - self.member_times.partition_point(|&y| y < t)
    }

    /// Member events at exactly `t`.
    pub fn events_at(&self, t: f64) -> usize {
        self.event_times.iter().position(|&s| s == t).map_or(0, |i| self.event_counts[i])
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Product-limit curve over the aggregate.
    pub fn curve(&self) -> StepCurve {
        product_limit(
            self.event_times.iter().zip(&self.event_counts).zip(&self.risk_counts).map(|((&t, &d), &r)| (t, d, r)),
        )
    }
}

/// A fitted ensemble: machines trained on `D_k` plus the calibration set `D_l`
/// with every machine's curve for every calibration record.
#[derive(Debug, Clone)]
pub struct CobraModel {
    params: CobraParams,
    machines: Vec<FittedLearner>,
    calibration: SurvivalDataset,
    calibration_curves: Vec<Vec<StepCurve>>,
    t_max: f64,
    grids: Vec<DenseGrid>,
    /// `[machine][calibration]` curve samples on the machine's grid.
    samples: Vec<Vec<Vec<f64>>>,
    /// Calibration indices by ascending time.
    time_order: Vec<usize>,
    population: StepCurve,
}

/// Splits `train`, fits every machine on `D_k` and caches the calibration curves.
pub fn fit_cobra(train: &SurvivalDataset, params: &CobraParams, seed: u64) -> Result<CobraModel> {
    params.validate()?;
    let split = cobra_split(train, params.l_fraction, seed)?;
    let machines = params.roster.par_iter().map(|spec| fit(spec, &split.d_k)).collect::<Result<Vec<_>>>()?;
    let event_times: Vec<f64> = split.d_k.records().iter().filter(|r| r.event).map(|r| r.time).collect();
    CobraModel::from_machines(params.clone(), machines, split.d_l, split.d_k.max_time(), &event_times)
}

impl CobraModel {
    /// Assembles a model from machines fit elsewhere. Every machine's curves
    /// must jump only at points of `jump_times` (the event times of the
    /// machines' training data); `t_max` bounds the distance integral.
    pub fn from_machines(
        params: CobraParams,
        machines: Vec<FittedLearner>,
        calibration: SurvivalDataset,
        t_max: f64,
        jump_times: &[f64],
    ) -> Result<Self> {
        params.validate()?;
        if machines.len() != params.roster.len() {
            return Err(Error::InvalidParameter(format!(
                "{} machines for a roster of {}",
                machines.len(),
                params.roster.len()
            )));
        }
        let calibration_curves = calibration
            .records()
            .par_iter()
            .map(|r| machines.iter().map(|m| m.predict_curve(&r.covariates)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let grid = DenseGrid::new(jump_times.iter().copied(), t_max)?;
        let grids = vec![grid; machines.len()];
        let samples = (0..machines.len())
            .map(|m| calibration_curves.iter().map(|cs| grids[m].sample(&cs[m])).collect())
            .collect();
        let mut time_order: Vec<usize> = (0..calibration.len()).collect();
        let recs = calibration.records();
        time_order.sort_by(|&a, &b| recs[a].time.total_cmp(&recs[b].time).then(a.cmp(&b)));
        let population = kaplan_meier(&calibration.times(), &calibration.events())?;
        Ok(Self { params, machines, calibration, calibration_curves, t_max, grids, samples, time_order, population })
    }

    pub fn params(&self) -> &CobraParams {
        &self.params
    }

    pub fn machines(&self) -> &[FittedLearner] {
        &self.machines
    }

    pub fn calibration(&self) -> &SurvivalDataset {
        &self.calibration
    }

    /// `[calibration][machine]` predicted curves.
    pub fn calibration_curves(&self) -> &[Vec<StepCurve>] {
        &self.calibration_curves
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Kaplan–Meier over all of `D_l`; also the fallback for empty proximity sets.
    pub fn population_curve(&self) -> &StepCurve {
        &self.population
    }

    /// Returns a copy using different `ε` and `α` with the same machines.
    pub fn with_threshold(&self, epsilon: f64, alpha: f64) -> Result<Self> {
        let params = CobraParams { epsilon, alpha, ..self.params.clone() };
        params.validate()?;
        Ok(Self { params, ..self.clone() })
    }

    /// Every machine's curve for `x`.
    pub fn query_curves(&self, x: &[f64]) -> Result<Vec<StepCurve>> {
        self.machines.iter().map(|m| m.predict_curve(x)).collect()
    }

    /// Area distances from `x` to every calibration record, flattened as
    /// `[j * M + m]`.
    pub fn distances(&self, x: &[f64]) -> Result<Vec<f64>> {
        let curves = self.query_curves(x)?;
        let m_count = self.machines.len();
        let query: Vec<Vec<f64>> = curves.iter().zip(&self.grids).map(|(c, g)| g.sample(c)).collect();
        let mut out = vec![0.0; self.calibration.len() * m_count];
        for m in 0..m_count {
            for (j, cal) in self.samples[m].iter().enumerate() {
                out[j * m_count + m] = self.grids[m].distance(&query[m], cal);
            }
        }
        Ok(out)
    }

    /// Distance rows for a batch of queries.
    pub fn distance_table(&self, queries: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        queries.par_iter().map(|x| self.distances(x)).collect()
    }

    fn membership(&self, distances: &[f64], epsilon: f64, required: usize) -> Vec<bool> {
        distances
            .chunks_exact(self.machines.len())
            .map(|row| row.iter().filter(|&&d| d <= epsilon).count() >= required)
            .collect()
    }

    /// `Γ(x; X_j)` for one calibration index.
    pub fn gamma_indicator(&self, x: &[f64], j: usize) -> Result<bool> {
        if j >= self.calibration.len() {
            return Err(Error::InvalidParameter(format!("calibration index {j} out of range")));
        }
        let m_count = self.machines.len();
        let d = self.distances(x)?;
        let agree = d[j * m_count..(j + 1) * m_count].iter().filter(|&&v| v <= self.params.epsilon).count();
        Ok(agree >= self.params.required_agreement())
    }

    /// `Γ(x; X_j)` for every calibration record.
    pub fn gamma(&self, x: &[f64]) -> Result<Vec<bool>> {
        Ok(self.membership(&self.distances(x)?, self.params.epsilon, self.params.required_agreement()))
    }

    pub fn aggregate_members(&self, gamma: &[bool]) -> ProximityAggregate {
        let recs = self.calibration.records();
        let ordered: Vec<usize> = self.time_order.iter().copied().filter(|&j| gamma[j]).collect();
        let member_times: Vec<f64> = ordered.iter().map(|&j| recs[j].time).collect();
        let total = ordered.len();
        let (mut event_times, mut event_counts, mut risk_counts) = (Vec::new(), Vec::new(), Vec::new());
        let mut i = 0;
        while i < total {
            let t = member_times[i];
            let at_risk = total - i;
            let mut d = 0;
            while i < total && member_times[i] == t {
                d += usize::from(recs[ordered[i]].event);
                i += 1;
            }
            if d > 0 {
                event_times.push(t);
                event_counts.push(d);
                risk_counts.push(at_risk);
            }
        }
        let mut members = ordered;
        members.sort_unstable();
        ProximityAggregate { members, event_times, event_counts, risk_counts, member_times }
    }

    pub fn proximity_aggregate(&self, x: &[f64]) -> Result<ProximityAggregate> {
        Ok(self.aggregate_members(&self.gamma(x)?))
    }

    fn curve_from_gamma(&self, gamma: &[bool]) -> StepCurve {
        let agg = self.aggregate_members(gamma);
        if agg.event_times.is_empty() {
            self.population.clone()
        } else {
            agg.curve()
        }
    }

    /// Aggregated Kaplan–Meier for `x`; the population curve of `D_l` when no
    /// proximal record has an event.
    pub fn predict(&self, x: &[f64]) -> Result<StepCurve> {
        Ok(self.curve_from_gamma(&self.gamma(x)?))
    }

    /// Prediction from a precomputed [`CobraModel::distances`] row under any threshold.
    pub fn predict_from_distances(&self, distances: &[f64], epsilon: f64, alpha: f64) -> StepCurve {
        let required = required_agreement(alpha, self.machines.len());
        self.curve_from_gamma(&self.membership(distances, epsilon, required))
    }

    pub fn predict_batch(&self, queries: &[Vec<f64>]) -> Result<Vec<StepCurve>> {
        queries.par_iter().map(|x| self.predict(x)).collect()
    }

    /// Largest distance over all machines from any query to any calibration record.
    pub fn max_distance(&self, queries: &[Vec<f64>]) -> Result<f64> {
        Ok(self.distance_table(queries)?.iter().flatten().copied().fold(0.0, f64::max))
    }
}
