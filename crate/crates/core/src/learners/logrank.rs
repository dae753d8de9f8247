//! Two-sample log-rank statistic and the exhaustive split search built on it.
//!
//! Sweeping a sorted feature moves records one at a time into the left group.
//! With `K_j` the number of distinct event times not after `y_j`, the left
//! group's numerator `Σ_k (d_Lk − Y_Lk d_k / Y_k)` and variance
//! `Σ_k v_k (Y_Lk / Y_k)(1 − Y_Lk / Y_k)` reduce to prefix sums over `K_j`,
//! except for the quadratic term `Σ_k v_k Y_Lk² / Y_k²`. Its increment needs
//! `Σ_{j∈L} B(min(K_i, K_j))`, kept in two Fenwick trees keyed by `K`.

use crate::data::SurvivalRecord;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub statistic: f64,
}

/// Smallest statistic accepted as a real split.
const MIN_STATISTIC: f64 = 1e-9;

/// Log-rank chi-square statistic comparing `left[i] == true` against the rest.
/// Returns 0 when the variance vanishes.
pub fn log_rank_statistic(times: &[f64], events: &[bool], left: &[bool]) -> f64 {
    let mut event_times: Vec<f64> = times.iter().zip(events).filter(|(_, &e)| e).map(|(&t, _)| t).collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let (mut num, mut var) = (0.0, 0.0);
    for &t in &event_times {
        let (mut y, mut d, mut yl, mut dl) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..times.len() {
            if times[i] >= t {
                y += 1.0;
                if left[i] {
                    yl += 1.0;
                }
            }
            if times[i] == t && events[i] {
                d += 1.0;
                if left[i] {
                    dl += 1.0;
                }
            }
        }
        num += dl - yl * d / y;
        if y > 1.0 {
            var += (yl / y) * (1.0 - yl / y) * (y - d) / (y - 1.0) * d;
        }
    }
    if var > 0.0 {
        num * num / var
    } else {
        0.0
    }
}

struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, mut i: usize) -> f64 {
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Per-node quantities shared by every feature sweep.
struct NodeTable {
    /// `K_j` per row position.
    k: Vec<usize>,
    /// Prefix sums of `d_k / Y_k`, `v_k / Y_k`, `v_k / Y_k²`, indexed `0..=D`.
    e: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl NodeTable {
    fn new(records: &[SurvivalRecord], rows: &[usize]) -> Option<Self> {
        let mut times: Vec<(f64, bool)> = rows.iter().map(|&r| (records[r].time, records[r].event)).collect();
        times.sort_by(|x, y| x.0.total_cmp(&y.0));
        let n = times.len();
        let mut event_times = Vec::new();
        let (mut e, mut a, mut b) = (vec![0.0], vec![0.0], vec![0.0]);
        let mut i = 0;
        while i < n {
            let t = times[i].0;
            let y = (n - i) as f64;
            let mut d = 0usize;
            while i < n && times[i].0 == t {
                d += usize::from(times[i].1);
                i += 1;
            }
            if d > 0 {
                let d = d as f64;
                let v = if y > 1.0 { d * (y - d) / (y - 1.0) } else { 0.0 };
                event_times.push(t);
                e.push(e.last().unwrap() + d / y);
                a.push(a.last().unwrap() + v / y);
                b.push(b.last().unwrap() + v / (y * y));
            }
        }
        if event_times.is_empty() {
            return None;
        }
        let k = rows
            .iter()
            .map(|&r| event_times.partition_point(|&t| t <= records[r].time))
            .collect();
        Some(Self { k, e, a, b })
    }
}

/// Best log-rank split of `rows` over `features`, with both children holding at
/// least `min_leaf` rows. Candidate thresholds are midpoints between
/// consecutive distinct feature values; ties keep the earliest candidate.
pub fn best_split(records: &[SurvivalRecord], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
    let n = rows.len();
    if n < 2 * min_leaf.max(1) {
        return None;
    }
    let table = NodeTable::new(records, rows)?;
    let n_k = table.e.len();
    let mut best: Option<Split> = None;
    let mut order: Vec<usize> = (0..n).collect();
    for &f in features {
        let value = |pos: usize| records[rows[pos]].covariates[f];
        order.sort_by(|&x, &y| value(x).total_cmp(&value(y)));
        if value(order[0]) == value(order[n - 1]) {
            continue;
        }
        let mut count = Fenwick::new(n_k);
        let mut bsum = Fenwick::new(n_k);
        let (mut deaths, mut sum_e, mut sum_a, mut quad) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n - 1 {
            let pos = order[i];
            let ki = table.k[pos];
            let bi = table.b[ki];
            let in_left = i as f64;
            let lt = count.prefix(ki);
            let cross = bi * (in_left - lt) + bsum.prefix(ki);
            quad += 2.0 * cross + bi;
            count.add(ki, 1.0);
            bsum.add(ki, bi);
            deaths += f64::from(u8::from(records[rows[pos]].event));
            sum_e += table.e[ki];
            sum_a += table.a[ki];

            let left = i + 1;
            let (v, v_next) = (value(pos), value(order[i + 1]));
            if v == v_next || left < min_leaf || n - left < min_leaf {
                continue;
            }
            let var = sum_a - quad;
            if var <= 1e-12 {
                continue;
            }
            let num = deaths - sum_e;
            let stat = num * num / var;
            if stat > MIN_STATISTIC && best.is_none_or(|s| stat > s.statistic) {
                let mid = 0.5 * (v + v_next);
                let threshold = if mid < v_next { mid } else { v };
                best = Some(Split { feature: f, threshold, statistic: stat });
            }
        }
    }
    best
}
