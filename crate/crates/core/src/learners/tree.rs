use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logrank::best_split;
use crate::curves::{kaplan_meier, StepCurve};
use crate::data::{SurvivalDataset, SurvivalRecord};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOptions {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features sampled per node; `None` tries all of them.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { curve: StepCurve },
}

/// Binary survival tree grown by log-rank splitting, with a Kaplan–Meier
/// curve in every leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<Node>,
}

pub fn fit_survival_tree(data: &SurvivalDataset, opts: &TreeOptions) -> Result<SurvivalTree> {
    let rows: Vec<usize> = (0..data.len()).collect();
    grow(data.records(), rows, opts, None)
}

pub(crate) fn grow(
    records: &[SurvivalRecord],
    rows: Vec<usize>,
    opts: &TreeOptions,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<SurvivalTree> {
    let p = records.first().map_or(0, |r| r.covariates.len());
    let mut builder = Builder { records, opts, p, rng, nodes: Vec::new() };
    builder.build(rows, 0)?;
    Ok(SurvivalTree { nodes: builder.nodes })
}

struct Builder<'a, 'r> {
    records: &'a [SurvivalRecord],
    opts: &'a TreeOptions,
    p: usize,
    rng: Option<&'r mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_, '_> {
    fn candidates(&mut self) -> Vec<usize> {
        match (self.opts.mtry, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < self.p => {
                let mut f = index::sample(rng, self.p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.p).collect(),
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> Result<usize> {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { curve: StepCurve::survival_one() });
        let split = if depth < self.opts.max_depth {
            let features = self.candidates();
            best_split(self.records, &rows, &features, self.opts.min_leaf)
        } else {
            None
        };
        match split {
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| self.records[i].covariates[s.feature] <= s.threshold);
                drop(rows);
                let left = self.build(l, depth + 1)?;
                let right = self.build(r, depth + 1)?;
                self.nodes[id] = Node::Split { feature: s.feature, threshold: s.threshold, left, right };
            }
            None => {
                let times: Vec<f64> = rows.iter().map(|&i| self.records[i].time).collect();
                let events: Vec<bool> = rows.iter().map(|&i| self.records[i].event).collect();
                self.nodes[id] = Node::Leaf { curve: kaplan_meier(&times, &events)? };
            }
        }
        Ok(id)
    }
}

impl SurvivalTree {
    pub fn predict(&self, x: &[f64]) -> &StepCurve {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split { feature, threshold, left, right } => {
                    id = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { curve } => return curve,
            }
        }
    }

    /// `(feature, threshold)` at the root, if the root splits.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::logrank::log_rank_statistic;

    fn opts(max_depth: usize, min_leaf: usize) -> TreeOptions {
        TreeOptions { max_depth, min_leaf, mtry: None }
    }

    #[test]
    fn homogeneous_times_root_only() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        let d = SurvivalDataset::from_columns(x, &[4.0; 30], &[true; 30]).unwrap();
        let t = fit_survival_tree(&d, &opts(5, 3)).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.predict(&[3.0]), &kaplan_meier(&d.times(), &d.events()).unwrap());
    }

    /// Two clusters: x0 < 0.5 dies near t=1, x0 > 0.5 near t=10; x1 is noise.
    fn clusters() -> SurvivalDataset {
        let mut x = Vec::new();
        let mut t = Vec::new();
        for i in 0..40 {
            let early = i % 2 == 0;
            let x0 = if early { 0.05 + 0.01 * (i / 2) as f64 } else { 0.55 + 0.01 * (i / 2) as f64 };
            let x1 = ((i * 7) % 11) as f64 / 11.0;
            x.push(vec![x1, x0]);
            t.push(if early { 1.0 } else { 10.0 });
        }
        SurvivalDataset::from_columns(x, &t, &vec![true; 40]).unwrap()
    }

    #[test]
    fn separating_feature_chosen_at_root() {
        let d = clusters();
        let tree = fit_survival_tree(&d, &opts(1, 5)).unwrap();
        let (feature, threshold) = tree.root_split().unwrap();
        assert_eq!(feature, 1);
        assert!(threshold > 0.24 && threshold < 0.55, "threshold {threshold}");
        assert_eq!(tree.depth(), 1);

        // Brute force: the chosen split's statistic is strictly maximal.
        let times = d.times();
        let events = d.events();
        let stat_of = |f: usize, thr: f64| {
            let left: Vec<bool> = d.records().iter().map(|r| r.covariates[f] <= thr).collect();
            log_rank_statistic(&times, &events, &left)
        };
        let chosen = stat_of(feature, threshold);
        for f in 0..2 {
            let mut vals: Vec<f64> = d.records().iter().map(|r| r.covariates[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let thr = 0.5 * (w[0] + w[1]);
                if (f, thr) != (feature, threshold) {
                    assert!(stat_of(f, thr) < chosen);
                }
            }
        }
    }

    #[test]
    fn leaf_curve_is_km_of_members() {
        let x = vec![vec![0.0], vec![0.0], vec![0.0]];
        let d = SurvivalDataset::from_columns(x, &[3.0, 5.0, 7.0], &[true, false, true]).unwrap();
        let tree = fit_survival_tree(&d, &opts(3, 1)).unwrap();
        let c = tree.predict(&[0.0]);
        assert_eq!(c.evaluate(3.0), 1.0 - 1.0 / 3.0);
        assert_eq!(c.evaluate(7.0), 0.0);
    }

    #[test]
    fn depth_and_leaf_size_limits() {
        let d = clusters();
        let deep = fit_survival_tree(&d, &opts(10, 1)).unwrap();
        assert!(deep.depth() <= 10);
        let shallow = fit_survival_tree(&d, &opts(0, 1)).unwrap();
        assert_eq!(shallow.leaf_count(), 1);
        let big_leaves = fit_survival_tree(&d, &opts(10, 21)).unwrap();
        assert_eq!(big_leaves.leaf_count(), 1);
    }
}
