//! Right-continuous step curves and the product-limit family of estimators.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Survival curves start at 1 and never increase; cumulative curves (hazards)
/// start at 0 and never decrease.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    Survival,
    Cumulative,
}

impl CurveKind {
    fn initial(self) -> f64 {
        match self {
            CurveKind::Survival => 1.0,
            CurveKind::Cumulative => 0.0,
        }
    }
}

/// Piecewise-constant function on `[0, ∞)`: `values[i]` holds on
/// `[times[i], times[i + 1])`, and the initial value holds before `times[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCurve {
    times: Vec<f64>,
    values: Vec<f64>,
    kind: CurveKind,
}

impl StepCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Result<Self> {
        check_curve(&times, &values, kind)?;
        Ok(Self { times, values, kind })
    }

    /// Constant survival curve equal to 1.
    pub fn survival_one() -> Self {
        Self { times: Vec::new(), values: Vec::new(), kind: CurveKind::Survival }
    }

    pub(crate) fn from_parts_unchecked(times: Vec<f64>, values: Vec<f64>, kind: CurveKind) -> Self {
        debug_assert!(check_curve(&times, &values, kind).is_ok());
        Self { times, values, kind }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.kind.initial(),
            i => self.values[i - 1],
        }
    }

    /// Values at each point of a sorted slice, in one forward pass.
    pub fn evaluate_sorted(&self, points: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut i = 0;
        let mut current = self.kind.initial();
        for &t in points {
            while i < self.times.len() && self.times[i] <= t {
                current = self.values[i];
                i += 1;
            }
            out.push(current);
        }
    }

    /// Maps every value through `f`, keeping the jump locations. Intended for
    /// monotone transforms in tests and diagnostics.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> StepCurve {
        StepCurve { times: self.times.clone(), values: self.values.iter().map(|&v| f(v)).collect(), kind: self.kind }
    }

    /// `time,value` rows, starting with the initial value at `t = 0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,value")?;
        writeln!(w, "0,{}", self.kind.initial())?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

fn check_curve(times: &[f64], values: &[f64], kind: CurveKind) -> Result<()> {
    if times.len() != values.len() {
        return Err(Error::InvalidCurve("times and values differ in length".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::InvalidCurve("jump times must be finite and nonnegative".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidCurve("jump times must be strictly increasing".into()));
    }
    let mut prev = kind.initial();
    for &v in values {
        let ok = match kind {
            CurveKind::Survival => (0.0..=1.0).contains(&v) && v <= prev,
            CurveKind::Cumulative => v.is_finite() && v >= prev,
        };
        if !ok {
            return Err(Error::InvalidCurve(format!("value {v} breaks {kind:?} monotonicity")));
        }
        prev = v;
    }
    Ok(())
}

/// Product-limit survival curve from `(time, deaths, at_risk)` steps in
/// ascending time order.
pub(crate) fn product_limit(steps: impl IntoIterator<Item = (f64, usize, usize)>) -> StepCurve {
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut s = 1.0;
    for (t, d, r) in steps {
        s *= 1.0 - d as f64 / r as f64;
        times.push(t);
        values.push(s);
    }
    StepCurve::from_parts_unchecked(times, values, CurveKind::Survival)
}

/// Distinct event times with their event and at-risk counts.
fn event_table(times: &[f64], events: &[bool]) -> Result<Vec<(f64, usize, usize)>> {
    if times.len() != events.len() {
        return Err(Error::InvalidParameter("times and events differ in length".into()));
    }
    if times.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let n = times.len();
    let mut table = Vec::new();
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = n - i;
        let mut deaths = 0;
        while i < n && times[order[i]] == t {
            deaths += usize::from(events[order[i]]);
            i += 1;
        }
        if deaths > 0 {
            table.push((t, deaths, at_risk));
        }
    }
    Ok(table)
}

/// Product-limit estimate of the survival function.
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepCurve> {
    Ok(product_limit(event_table(times, events)?))
}

/// Cumulative-hazard estimate `Σ d/r` over event times.
pub fn nelson_aalen(times: &[f64], events: &[bool]) -> Result<StepCurve> {
    let mut h = 0.0;
    let (ts, hs) = event_table(times, events)?
        .into_iter()
        .map(|(t, d, r)| {
            h += d as f64 / r as f64;
            (t, h)
        })
        .unzip();
    Ok(StepCurve::from_parts_unchecked(ts, hs, CurveKind::Cumulative))
}

/// Kaplan–Meier of the censoring distribution (flags flipped).
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<StepCurve> {
    let flipped: Vec<bool> = events.iter().map(|e| !e).collect();
    kaplan_meier(times, &flipped)
}

/// Left-Riemann area between two curves on `grid`, normalized by the grid span.
pub fn area_distance(a: &StepCurve, b: &StepCurve, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("distance grid needs at least two points".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("distance grid must be strictly increasing".into()));
    }
    let span = grid[grid.len() - 1] - grid[0];
    let (mut va, mut vb) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
    a.evaluate_sorted(grid, &mut va);
    b.evaluate_sorted(grid, &mut vb);
    let mut area = 0.0;
    for k in 1..grid.len() {
        area += (va[k - 1] - vb[k - 1]).abs() * (grid[k] - grid[k - 1]);
    }
    Ok(area / span)
}

/// Sorted union of both curves' jumps on `[0, t_max]`, plus `0` and `t_max`.
pub fn distance_grid(a: &StepCurve, b: &StepCurve, t_max: f64) -> Vec<f64> {
    let mut grid: Vec<f64> = std::iter::once(0.0)
        .chain(a.times.iter().copied())
        .chain(b.times.iter().copied())
        .chain(std::iter::once(t_max))
        .filter(|&t| t <= t_max)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Area distance on [`distance_grid`], integrating both step curves exactly over
/// `[0, t_max]`.
pub fn curve_distance(a: &StepCurve, b: &StepCurve, t_max: f64) -> Result<f64> {
    area_distance(a, b, &distance_grid(a, b, t_max))
}

/// A fixed integration grid shared by many curves whose jumps all lie on it.
///
/// Curves are sampled once into dense vectors; the distance between two
/// samples is the same exact integral [`curve_distance`] computes, since a
/// refinement of the jump set does not change a left-Riemann sum of step
/// functions (up to rounding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseGrid {
    points: Vec<f64>,
    widths: Vec<f64>,
    span: f64,
}

impl DenseGrid {
    /// Grid `{0} ∪ jumps ∪ {t_max}` restricted to `[0, t_max]`.
    pub fn new(jumps: impl IntoIterator<Item = f64>, t_max: f64) -> Result<Self> {
        if !(t_max > 0.0) {
            return Err(Error::InvalidParameter(format!("t_max must be positive, got {t_max}")));
        }
        let mut points: Vec<f64> = std::iter::once(0.0)
            .chain(jumps)
            .chain(std::iter::once(t_max))
            .filter(|&t| (0.0..=t_max).contains(&t))
            .collect();
        points.sort_by(f64::total_cmp);
        points.dedup();
        let widths = points.windows(2).map(|w| w[1] - w[0]).collect();
        points.pop();
        Ok(Self { points, widths, span: t_max })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Curve values at the left endpoint of every cell.
    pub fn sample(&self, curve: &StepCurve) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        curve.evaluate_sorted(&self.points, &mut out);
        out
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.widths.len());
        debug_assert_eq!(b.len(), self.widths.len());
        // Four independent accumulators so the loop vectorizes.
        let mut acc = [0.0f64; 4];
        let chunks = self.widths.len() / 4 * 4;
        for ((wa, wb), ww) in a[..chunks]
            .chunks_exact(4)
            .zip(b[..chunks].chunks_exact(4))
            .zip(self.widths[..chunks].chunks_exact(4))
        {
            for l in 0..4 {
                acc[l] += (wa[l] - wb[l]).abs() * ww[l];
            }
        }
        let mut tail = 0.0;
        for k in chunks..self.widths.len() {
            tail += (a[k] - b[k]).abs() * self.widths[k];
        }
        ((acc[0] + acc[1]) + (acc[2] + acc[3]) + tail) / self.span
    }
}

/// Pointwise mean of curves of one kind on the union of their jump times.
pub fn pointwise_mean(curves: &[&StepCurve]) -> Result<StepCurve> {
    let first = curves.first().ok_or(Error::EmptyInput)?;
    let kind = first.kind;
    if curves.iter().any(|c| c.kind != kind) {
        return Err(Error::InvalidCurve("cannot average curves of different kinds".into()));
    }
    let mut grid: Vec<f64> = curves.iter().flat_map(|c| c.times.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut sums = vec![0.0; grid.len()];
    let mut buf = Vec::with_capacity(grid.len());
    for c in curves {
        c.evaluate_sorted(&grid, &mut buf);
        for (s, v) in sums.iter_mut().zip(&buf) {
            *s += v;
        }
    }
    let m = curves.len() as f64;
    let mut values: Vec<f64> = sums.into_iter().map(|s| s / m).collect();
    // Rounding in the sums can break monotonicity by an ulp.
    match kind {
        CurveKind::Survival => {
            let mut prev = 1.0f64;
            for v in values.iter_mut() {
                *v = v.clamp(0.0, prev);
                prev = *v;
            }
        }
        CurveKind::Cumulative => {
            let mut prev = 0.0f64;
            for v in values.iter_mut() {
                *v = v.max(prev);
                prev = *v;
            }
        }
    }
    Ok(StepCurve::from_parts_unchecked(grid, values, kind))
}
