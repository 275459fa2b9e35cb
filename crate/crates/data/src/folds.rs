//! Subject-disjoint partitioning of a dataset into cross-validation folds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DataError, Result};

/// Fold index of every subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub folds: BTreeMap<usize, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, subject: usize) -> Option<usize> {
        self.folds.get(&subject).copied()
    }

    pub fn subjects(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(&s, _)| s)
            .collect()
    }

    /// Image totals per fold, given per-subject counts.
    pub fn totals(&self, counts: &[(usize, usize)]) -> Vec<usize> {
        let mut t = vec![0; self.k];
        for &(s, c) in counts {
            if let Some(f) = self.fold_of(s) {
                t[f] += c;
            }
        }
        t
    }
}

/// Greedy largest-first packing: subjects sorted by decreasing image count
/// (equal counts in a seeded random order) each go to the currently
/// smallest fold, lowest index first on ties.
pub fn partition_folds(counts: &[(usize, usize)], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(DataError::Folds(format!("need at least 2 folds, got {k}")));
    }
    if counts.len() < k {
        return Err(DataError::Folds(format!(
            "{} subjects cannot fill {k} folds",
            counts.len()
        )));
    }
    let mut order = counts.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.1.cmp(&a.1));
    let mut totals = vec![0usize; k];
    let mut folds = BTreeMap::new();
    for (subject, count) in order {
        let target = (0..k).min_by_key(|&f| (totals[f], f)).expect("k ≥ 2");
        totals[target] += count;
        if folds.insert(subject, target).is_some() {
            return Err(DataError::Folds(format!("subject {subject} listed twice")));
        }
    }
    Ok(FoldAssignment { k, folds })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_subjects_one_per_fold() {
        let a = partition_folds(&[(0, 5), (1, 5), (2, 5)], 3, 7).unwrap();
        let mut f: Vec<usize> = a.folds.values().copied().collect();
        f.sort();
        assert_eq!(f, [0, 1, 2]);
    }

    #[test]
    fn greedy_packing_balances_example() {
        let counts: Vec<(usize, usize)> = [10, 9, 8, 7, 6, 5].iter().copied().enumerate().collect();
        let a = partition_folds(&counts, 3, 0).unwrap();
        assert_eq!(a.totals(&counts), [15, 15, 15]);
    }

    #[test]
    fn too_few_subjects_is_an_error() {
        assert!(partition_folds(&[(0, 1), (1, 1)], 3, 0).is_err());
        assert!(partition_folds(&[(0, 1), (1, 1)], 1, 0).is_err());
    }
}
