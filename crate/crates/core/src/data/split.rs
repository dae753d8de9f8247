use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::SurvivalDataset;
use crate::error::{Error, Result};
use crate::seed;

/// Machine-training part `D_k` and calibration part `D_l` of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub d_k: SurvivalDataset,
    pub d_l: SurvivalDataset,
    pub seed: u64,
}

/// Test-fold index sets for `n` records. The first `n % folds` folds get one
/// extra record. Indices inside each fold are ascending.
pub fn kfold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!("folds must be at least 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::InvalidParameter(format!("{folds} folds requested for {n} records")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += size;
    }
    Ok(out)
}

/// `(train, test)` pairs for each fold, records kept in original order.
pub fn kfold_split(
    data: &SurvivalDataset,
    folds: usize,
    seed: u64,
) -> Result<Vec<(SurvivalDataset, SurvivalDataset)>> {
    let n = data.len();
    let test_sets = kfold_indices(n, folds, seed)?;
    Ok(test_sets
        .iter()
        .map(|test| {
            let mut in_test = vec![false; n];
            for &i in test {
                in_test[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            (data.subset(&train), data.subset(test))
        })
        .collect())
}

/// Random split with `l = round(l_fraction * n)` calibration records.
pub fn cobra_split(train: &SurvivalDataset, l_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(l_fraction > 0.0 && l_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!("l_fraction must lie in (0, 1), got {l_fraction}")));
    }
    let n = train.len();
    let l = (l_fraction * n as f64).round() as usize;
    if l < 1 || l >= n {
        return Err(Error::InvalidParameter(format!(
            "l_fraction {l_fraction} on {n} records leaves k = {}, l = {l}",
            n.saturating_sub(l)
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::rng(seed));
    let (cal, fit) = perm.split_at_mut(l);
    cal.sort_unstable();
    fit.sort_unstable();
    Ok(DatasetSplit { d_k: train.subset(fit), d_l: train.subset(cal), seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> SurvivalDataset {
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let t: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let e = vec![true; n];
        SurvivalDataset::from_columns(x, &t, &e).unwrap()
    }

    fn ids(d: &SurvivalDataset) -> Vec<usize> {
        d.records().iter().map(|r| r.covariates[0] as usize).collect()
    }

    #[test]
    fn ten_into_five() {
        let pairs = kfold_split(&data(10), 5, 1).unwrap();
        assert_eq!(pairs.len(), 5);
        for (train, test) in &pairs {
            assert_eq!(test.len(), 2);
            assert_eq!(train.len(), 8);
        }
    }

    #[test]
    fn remainder_goes_to_first_folds() {
        let sizes: Vec<usize> = kfold_indices(11, 5, 3).unwrap().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn folds_partition_and_are_deterministic() {
        let a = kfold_indices(37, 4, 9).unwrap();
        assert_eq!(a, kfold_indices(37, 4, 9).unwrap());
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
    }

    #[test]
    fn fold_errors() {
        assert!(kfold_indices(3, 5, 0).is_err());
        assert!(kfold_indices(3, 1, 0).is_err());
    }

    #[test]
    fn cobra_split_sizes() {
        let s = cobra_split(&data(100), 0.4, 5).unwrap();
        assert_eq!((s.d_k.len(), s.d_l.len()), (60, 40));
        let mut all = ids(&s.d_k);
        all.extend(ids(&s.d_l));
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn cobra_split_boundary() {
        let s = cobra_split(&data(2), 0.5, 0).unwrap();
        assert_eq!((s.d_k.len(), s.d_l.len()), (1, 1));
    }

    #[test]
    fn cobra_split_degenerate() {
        assert!(cobra_split(&data(3), 0.1, 0).is_err());
        assert!(cobra_split(&data(3), 0.95, 0).is_err());
        assert!(cobra_split(&data(3), 0.0, 0).is_err());
        assert!(cobra_split(&data(3), 1.0, 0).is_err());
    }

    #[test]
    fn cobra_split_whole_tuning_grid() {
        let d = data(50);
        for i in 1..=9 {
            let l = i as f64 / 10.0;
            let s = cobra_split(&d, l, 11).unwrap();
            assert_eq!(s.d_l.len(), (l * 50.0).round() as usize);
        }
    }
}
