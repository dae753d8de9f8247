//! Censored-data evaluation: time-dependent concordance, IPCW Brier score,
//! its trapezoidal integral, and the D-calibration goodness-of-fit test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::curves::{censoring_km, StepCurve};
use crate::error::{Error, Result};

/// Per-fold scores for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fold_id: usize,
    pub concordance: f64,
    pub ibs: f64,
    pub dcal_pass: bool,
    pub dcal_pvalue: f64,
}

impl MetricReport {
    /// Scores `curves` against the observed outcomes of one evaluation fold,
    /// with the censoring distribution estimated on that fold.
    pub fn evaluate(fold_id: usize, curves: &[StepCurve], times: &[f64], events: &[bool]) -> Result<Self> {
        let concordance = concordance_td(curves, times, events)?;
        let ibs = integrated_brier(curves, times, events, &event_time_grid(times, events))?;
        let (dcal_pass, dcal_pvalue) = d_calibration(curves, times, events, DCAL_BINS, DCAL_LEVEL)?;
        Ok(Self { fold_id, concordance, ibs, dcal_pass, dcal_pvalue })
    }
}

pub const DCAL_BINS: usize = 10;
pub const DCAL_LEVEL: f64 = 0.05;

fn check_aligned(curves: &[StepCurve], times: &[f64], events: &[bool]) -> Result<()> {
    if curves.len() != times.len() || times.len() != events.len() {
        return Err(Error::DimensionMismatch { expected: curves.len(), actual: times.len().min(events.len()) });
    }
    if curves.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Pair counts behind [`concordance_td`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub concordant: u64,
    pub tied: u64,
    pub comparable: u64,
}

impl PairCounts {
    pub fn score(&self) -> f64 {
        (self.concordant as f64 + 0.5 * self.tied as f64) / self.comparable as f64
    }
}

pub fn concordance_counts(curves: &[StepCurve], times: &[f64], events: &[bool]) -> Result<PairCounts> {
    check_aligned(curves, times, events)?;
    let mut c = PairCounts::default();
    for i in (0..times.len()).filter(|&i| events[i]) {
        let ti = times[i];
        let si = curves[i].evaluate(ti);
        for j in (0..times.len()).filter(|&j| times[j] > ti) {
            let sj = curves[j].evaluate(ti);
            c.comparable += 1;
            if si < sj {
                c.concordant += 1;
            } else if si == sj {
                c.tied += 1;
            }
        }
    }
    Ok(c)
}

/// Share of comparable pairs (`δ_i = 1`, `t_i < t_j`) where the earlier
/// subject has the lower predicted survival at `t_i`; ties count one half.
pub fn concordance_td(curves: &[StepCurve], times: &[f64], events: &[bool]) -> Result<f64> {
    let c = concordance_counts(curves, times, events)?;
    if c.comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(c.score())
}

/// Censoring-weighted Brier score at `t`. Records needing a zero weight
/// denominator are dropped and the average taken over the rest.
pub fn brier_censored(curves: &[StepCurve], times: &[f64], events: &[bool], t: f64, g: &StepCurve) -> Result<f64> {
    check_aligned(curves, times, events)?;
    let g_t = g.evaluate(t);
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((curve, &y), &d) in curves.iter().zip(times).zip(events) {
        let s = curve.evaluate(t);
        if y <= t {
            if d {
                let w = g.evaluate(y);
                if w > 0.0 {
                    sum += s * s / w;
                    n += 1;
                }
            } else {
                n += 1;
            }
        } else if g_t > 0.0 {
            sum += (1.0 - s) * (1.0 - s) / g_t;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter(format!("no record has a usable censoring weight at t = {t}")));
    }
    Ok(sum / n as f64)
}

/// Sorted unique event times: the default integration grid.
pub fn event_time_grid(times: &[f64], events: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Trapezoidal integral of the Brier score over `t_grid`, divided by the grid
/// span. The censoring distribution is the reverse Kaplan–Meier of the
/// supplied outcomes.
pub fn integrated_brier(curves: &[StepCurve], times: &[f64], events: &[bool], t_grid: &[f64]) -> Result<f64> {
    check_aligned(curves, times, events)?;
    let g = censoring_km(times, events)?;
    integrated_brier_with(curves, times, events, t_grid, &g)
}

/// [`integrated_brier`] with an explicit censoring survival curve.
pub fn integrated_brier_with(
    curves: &[StepCurve],
    times: &[f64],
    events: &[bool],
    t_grid: &[f64],
    g: &StepCurve,
) -> Result<f64> {
    if t_grid.len() < 2 {
        return Err(Error::InvalidParameter("integration grid needs at least two points".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("integration grid must be strictly increasing".into()));
    }
    let scores = t_grid.iter().map(|&t| brier_censored(curves, times, events, t, g)).collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(t_grid, &scores))
}

/// Normalized trapezoid rule: `∫ f / (x_last − x_first)`.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let area: f64 = x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0])).sum();
    area / (x[x.len() - 1] - x[0])
}

/// D-calibration histogram: event records add unit mass to the bin of
/// `Ŝ_i(y_i)`; censored records spread theirs over that bin and every lower one.
pub fn d_calibration_histogram(curves: &[StepCurve], times: &[f64], events: &[bool], bins: usize) -> Result<Vec<f64>> {
    check_aligned(curves, times, events)?;
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    let width = 1.0 / bins as f64;
    let mut mass = vec![0.0; bins];
    for ((curve, &y), &d) in curves.iter().zip(times).zip(events) {
        let p = curve.evaluate(y).clamp(0.0, 1.0);
        let b = ((p * bins as f64).floor() as usize).min(bins - 1);
        if d {
            mass[b] += 1.0;
        } else if p <= 0.0 {
            mass[0] += 1.0;
        } else {
            let lower = b as f64 * width;
            mass[b] += (p - lower) / p;
            for m in &mut mass[..b] {
                *m += width / p;
            }
        }
    }
    Ok(mass)
}

/// Chi-square test of the D-calibration histogram against uniform; returns
/// `(pvalue > level, pvalue)`.
pub fn d_calibration(
    curves: &[StepCurve],
    times: &[f64],
    events: &[bool],
    bins: usize,
    level: f64,
) -> Result<(bool, f64)> {
    let mass = d_calibration_histogram(curves, times, events, bins)?;
    let expected = curves.len() as f64 / bins as f64;
    let stat: f64 = mass.iter().map(|m| (m - expected) * (m - expected) / expected).sum();
    let chi = ChiSquared::new((bins - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let pvalue = (1.0 - chi.cdf(stat)).clamp(0.0, 1.0);
    Ok((pvalue > level, pvalue))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::{kaplan_meier, CurveKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn surv(t: &[f64], v: &[f64]) -> StepCurve {
        StepCurve::new(t.to_vec(), v.to_vec(), CurveKind::Survival).unwrap()
    }

    fn flat(v: f64) -> StepCurve {
        surv(&[0.0], &[v])
    }

    fn brute_concordance(curves: &[StepCurve], times: &[f64], events: &[bool]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..times.len() {
            for j in 0..times.len() {
                if events[i] && times[i] < times[j] {
                    den += 1.0;
                    let (a, b) = (curves[i].evaluate(times[i]), curves[j].evaluate(times[i]));
                    num += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn perfect_and_uninformative_concordance() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let curves: Vec<StepCurve> = times.iter().map(|&t| surv(&[t], &[0.0])).collect();
        assert_eq!(concordance_td(&curves, &times, &events).unwrap(), 1.0);
        let same = vec![flat(0.4); 4];
        assert_eq!(concordance_td(&same, &times, &events).unwrap(), 0.5);
        let reversed: Vec<StepCurve> = (0..4).map(|i| flat(0.9 - 0.2 * i as f64)).collect();
        assert_eq!(concordance_td(&reversed, &times, &events).unwrap(), 0.0);
    }

    #[test]
    fn three_subject_hand_count() {
        let curves = [surv(&[1.0], &[0.3]), surv(&[1.5], &[0.6]), surv(&[0.5], &[0.2])];
        let times = [1.0, 2.0, 3.0];
        let events = [true, false, true];
        // Comparable: (0,1) 0.3 < 1.0, (0,2) 0.3 > 0.2. Subject 1 is censored.
        assert_eq!(concordance_td(&curves, &times, &events).unwrap(), 0.5);
        assert_eq!(brute_concordance(&curves, &times, &events), Some(0.5));
    }

    #[test]
    fn no_comparable_pairs() {
        let c = vec![flat(0.5); 2];
        assert!(matches!(concordance_td(&c, &[1.0, 2.0], &[false, false]), Err(Error::NoComparablePairs)));
        assert!(matches!(concordance_td(&c, &[1.0, 1.0], &[true, true]), Err(Error::NoComparablePairs)));
        assert!(concordance_td(&c, &[1.0], &[true]).is_err());
    }

    #[test]
    fn brier_examples() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let g = StepCurve::survival_one();
        for t in [1.0, 2.5, 3.9] {
            let perfect: Vec<StepCurve> = times.iter().map(|&y| surv(&[y], &[0.0])).collect();
            assert_eq!(brier_censored(&perfect, &times, &events, t, &g).unwrap(), 0.0);
            let half = vec![flat(0.5); 4];
            assert_eq!(brier_censored(&half, &times, &events, t, &g).unwrap(), 0.25);
        }
    }

    #[test]
    fn brier_hand_computation_with_censoring() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true, false, true, true];
        let g = censoring_km(&times, &events).unwrap();
        assert_eq!(g.evaluate(1.0), 1.0);
        assert_eq!(g.evaluate(2.0), 1.0 - 1.0 / 3.0);
        let curves = vec![flat(0.7); 4];
        // t = 2.5: record 0 event before t (weight 1/G(1) = 1), record 1 censored (0),
        // records 2,3 beyond t (weight 1/G(2.5) = 3/2).
        let expected = (0.49 + 0.0 + 2.0 * 0.09 / (1.0 - 1.0 / 3.0)) / 4.0;
        let bs = brier_censored(&curves, &times, &events, 2.5, &g).unwrap();
        assert!((bs - expected).abs() < 1e-15);
    }

    #[test]
    fn brier_drops_zero_weight_records() {
        let times = [1.0, 2.0, 3.0];
        let events = [true, true, true];
        let g = surv(&[1.5], &[0.0]);
        let curves = vec![flat(0.5); 3];
        // At t=2.5, G(2.5)=0 removes record 2 and G(2)=0 removes record 1.
        assert_eq!(brier_censored(&curves, &times, &events, 2.5, &g).unwrap(), 0.25);
    }

    #[test]
    fn ibs_examples() {
        let times = [1.0, 2.0, 3.0, 4.0];
        let events = [true; 4];
        let half = vec![flat(0.5); 4];
        assert!((integrated_brier(&half, &times, &events, &[1.0, 2.0, 3.0, 4.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(trapezoid(&[1.0, 3.0], &[0.2, 0.4]), 0.30000000000000004);
        assert!(integrated_brier(&half, &times, &events, &[1.0]).is_err());
        assert_eq!(event_time_grid(&[3.0, 1.0, 3.0, 2.0], &[true, true, true, false]), vec![1.0, 3.0]);
    }

    #[test]
    fn ibs_matches_fine_riemann_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(5..25);
            let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
            let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
            events[0] = true;
            events[1] = true;
            let curves: Vec<StepCurve> = (0..n)
                .map(|_| {
                    let mut ts: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..10.0)).collect();
                    ts.sort_by(f64::total_cmp);
                    let mut vs: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                    vs.sort_by(|a, b| b.total_cmp(a));
                    surv(&ts, &vs)
                })
                .collect();
            let grid = event_time_grid(&times, &events);
            if grid.len() < 2 {
                continue;
            }
            let g = censoring_km(&times, &events).unwrap();
            let ibs = integrated_brier_with(&curves, &times, &events, &grid, &g).unwrap();
            // Trapezoid on event times versus a fine grid restricted to the same nodes.
            let (a, b) = (grid[0], grid[grid.len() - 1]);
            let steps = 20_000;
            let h = (b - a) / steps as f64;
            let fine_x: Vec<f64> = (0..=steps).map(|k| a + k as f64 * h).collect();
            let fine_y: Vec<f64> = fine_x
                .iter()
                .map(|&t| {
                    let k = grid.partition_point(|&s| s <= t).clamp(1, grid.len() - 1);
                    let (t0, t1) = (grid[k - 1], grid[k]);
                    let y0 = brier_censored(&curves, &times, &events, t0, &g).unwrap();
                    let y1 = brier_censored(&curves, &times, &events, t1, &g).unwrap();
                    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
                })
                .collect();
            assert!((ibs - trapezoid(&fine_x, &fine_y)).abs() < 1e-3);
        }
    }

    #[test]
    fn dcal_uniform_midpoints_pass() {
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let curves: Vec<StepCurve> = (0..n).map(|i| flat((i % 10) as f64 / 10.0 + 0.05)).collect();
        let (pass, p) = d_calibration(&curves, &times, &vec![true; n], 10, 0.05).unwrap();
        assert!(pass);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dcal_constant_one_fails() {
        let n = 1000;
        let times: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let curves = vec![StepCurve::survival_one(); n];
        let (pass, p) = d_calibration(&curves, &times, &vec![true; n], 10, 0.05).unwrap();
        assert!(!pass);
        assert!(p < 1e-100);
    }

    #[test]
    fn dcal_population_km_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let times: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..5.0f64).exp()).collect();
        let events = vec![true; 1000];
        let km = kaplan_meier(&times, &events).unwrap();
        let curves = vec![km; 1000];
        assert!(d_calibration(&curves, &times, &events, 10, 0.05).unwrap().0);
    }

    #[test]
    fn dcal_censored_mass_spreading() {
        let curves = [flat(0.35), flat(0.0), flat(1.0)];
        let mass = d_calibration_histogram(&curves, &[1.0, 2.0, 3.0], &[false, false, false], 10).unwrap();
        let expect_low = 0.1 / 0.35;
        for b in 0..3 {
            assert!((mass[b] - (expect_low + 0.1 + if b == 0 { 1.0 } else { 0.0 })).abs() < 1e-12);
        }
        assert!((mass[3] - (0.05 / 0.35 + 0.1)).abs() < 1e-12);
        assert!((mass.iter().sum::<f64>() - 3.0).abs() < 1e-12);
        assert!(d_calibration_histogram(&curves, &[1.0, 2.0, 3.0], &[false; 3], 1).is_err());
    }

    #[test]
    fn report_fields() {
        let times = [1.0, 2.0, 3.0, 4.0, 5.0];
        let events = [true, true, false, true, true];
        let curves: Vec<StepCurve> = times.iter().map(|&t| surv(&[t], &[0.2])).collect();
        let r = MetricReport::evaluate(3, &curves, &times, &events).unwrap();
        assert_eq!(r.fold_id, 3);
        assert!((0.0..=1.0).contains(&r.concordance));
        assert!(r.ibs >= 0.0);
        assert!((0.0..=1.0).contains(&r.dcal_pvalue));
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<StepCurve>, Vec<f64>, Vec<bool>)> {
        prop::collection::vec((1u32..12, any::<bool>(), prop::collection::vec(0u32..5, 3)), 2..30).prop_map(|rows| {
            let times = rows.iter().map(|r| r.0 as f64).collect();
            let events = rows.iter().map(|r| r.1).collect();
            let curves = rows
                .iter()
                .map(|r| {
                    let mut v: Vec<f64> = r.2.iter().map(|&k| k as f64 / 4.0).collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    surv(&[2.0, 5.0, 8.0], &v)
                })
                .collect();
            (curves, times, events)
        })
    }

    proptest! {
        #[test]
        fn concordance_matches_brute_force((c, t, e) in arb_instance()) {
            let fast = concordance_td(&c, &t, &e).ok();
            prop_assert_eq!(fast, brute_concordance(&c, &t, &e));
        }

        #[test]
        fn concordance_invariant_to_monotone_transform((c, t, e) in arb_instance()) {
            let mapped: Vec<StepCurve> = c.iter().map(|s| s.map_values(|v| v * v * 0.5)).collect();
            prop_assert_eq!(concordance_td(&c, &t, &e).ok(), concordance_td(&mapped, &t, &e).ok());
        }

        #[test]
        fn metrics_ignore_record_order((c, t, e) in arb_instance(), k in 0usize..30) {
            let k = k % t.len();
            let (mut c2, mut t2, mut e2) = (c.clone(), t.clone(), e.clone());
            c2.rotate_left(k);
            t2.rotate_left(k);
            e2.rotate_left(k);
            prop_assert_eq!(concordance_td(&c, &t, &e).ok(), concordance_td(&c2, &t2, &e2).ok());
            let grid = event_time_grid(&t, &e);
            if grid.len() >= 2 {
                let a = integrated_brier(&c, &t, &e, &grid).unwrap();
                let b = integrated_brier(&c2, &t2, &e2, &grid).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
            }
            let h1 = d_calibration_histogram(&c, &t, &e, 10).unwrap();
            let h2 = d_calibration_histogram(&c2, &t2, &e2, 10).unwrap();
            for (x, y) in h1.iter().zip(&h2) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((h1.iter().sum::<f64>() - t.len() as f64).abs() < 1e-9);
        }
    }
}
