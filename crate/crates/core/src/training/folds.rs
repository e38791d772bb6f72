use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeded_rng;

/// Train/test indices of one fold, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    /// Boolean mask of length `n` selecting `indices`.
    pub fn mask(indices: &[usize], n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &i in indices {
            m[i] = true;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub folds: Vec<Fold>,
}

/// Stratified k-fold split. Each class is shuffled with the seeded RNG and
/// dealt round-robin over the folds; the dealing position carries over
/// between classes so fold sizes stay balanced too.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "fold count must be at least 2, got {k}"
        )));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::InvalidInput(format!(
                "class {c} has {} members, fewer than the {k} folds requested",
                members.len()
            )));
        }
    }

    let mut rng = seeded_rng(seed);
    let mut test: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for (p, &i) in members.iter().enumerate() {
            test[(offset + p) % k].push(i);
        }
        offset = (offset + members.len()) % k;
    }

    let n = labels.len();
    let folds = test
        .into_iter()
        .map(|mut t| {
            t.sort_unstable();
            let in_test = Fold::mask(&t, n);
            Fold {
                train: (0..n).filter(|&i| !in_test[i]).collect(),
                test: t,
            }
        })
        .collect();
    Ok(FoldSplit { folds })
}
