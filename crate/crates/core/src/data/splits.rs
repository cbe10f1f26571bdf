use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRAC: f64 = 0.24;
pub const DEFAULT_VAL_FRAC: f64 = 0.06;

/// Disjoint train/val/test node ids over the target type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub ood_class: usize,
}

impl Splits {
    /// Checks range, disjointness and that no train/val node carries the OOD class.
    pub fn validate(&self, labels: &[usize]) -> Result<()> {
        let n = labels.len();
        let mut seen = HashSet::new();
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    context: "split node id".into(),
                    index: i,
                    bound: n,
                });
            }
            if !seen.insert(i) {
                return Err(Error::InvalidConfig(format!("node {i} appears in two splits")));
            }
        }
        if let Some(&node) = self
            .train
            .iter()
            .chain(&self.val)
            .find(|&&i| labels[i] == self.ood_class)
        {
            return Err(Error::OodLabelInTrainSet {
                node,
                class: self.ood_class,
            });
        }
        Ok(())
    }
}

/// In-place Fisher–Yates shuffle driven by ChaCha8 seeded with `seed_from_u64(seed)`.
///
/// For `i` from `len-1` down to 1, swap `i` with `j = next_u64() mod (i+1)`.
/// The modulo bias is below 2^-40 for any realistic node count.
pub fn fisher_yates<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Sends every OOD node to test and cuts the shuffled ID nodes at
/// `round(frac · N)` of the total target count `N`; the rest go to test.
/// Each split is returned in ascending order.
pub fn make_splits(labels: &[usize], ood_class: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Splits> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::FractionOverflow(format!(
            "fractions must be positive with sum below 1 (train {train_frac}, val {val_frac})"
        )));
    }
    if !labels.contains(&ood_class) {
        return Err(Error::OodClassMissing(ood_class));
    }
    let n = labels.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = (val_frac * n as f64).round() as usize;

    let (mut id_nodes, ood_nodes): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] != ood_class);
    if n_train + n_val > id_nodes.len() {
        return Err(Error::FractionOverflow(format!(
            "{n_train} train + {n_val} val nodes requested but only {} in-distribution nodes exist",
            id_nodes.len()
        )));
    }
    fisher_yates(&mut id_nodes, seed);
    let mut train = id_nodes[..n_train].to_vec();
    let mut val = id_nodes[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = id_nodes[n_train + n_val..].iter().copied().chain(ood_nodes).collect();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Splits {
        train,
        val,
        test,
        ood_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hundred_with_ten_ood() -> Vec<usize> {
        (0..100).map(|i| if i % 10 == 3 { 4 } else { i % 4 }).collect()
    }

    #[test]
    fn default_fractions_on_100_nodes() {
        let labels = hundred_with_ten_ood();
        let s = make_splits(&labels, 4, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (24, 6, 70));
        assert!(s.test.iter().filter(|&&i| labels[i] == 4).count() == 10);
        s.validate(&labels).unwrap();
    }

    #[test]
    fn deterministic_for_seed() {
        let labels = hundred_with_ten_ood();
        let a = make_splits(&labels, 4, 0.24, 0.06, 42).unwrap();
        let b = make_splits(&labels, 4, 0.24, 0.06, 42).unwrap();
        let c = make_splits(&labels, 4, 0.24, 0.06, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn too_many_ood_nodes() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i < 71)).collect();
        assert!(matches!(
            make_splits(&labels, 1, 0.24, 0.06, 0),
            Err(Error::FractionOverflow(_))
        ));
        let ok: Vec<usize> = (0..100).map(|i| usize::from(i < 70)).collect();
        assert!(make_splits(&ok, 1, 0.24, 0.06, 0).is_ok());
    }

    #[test]
    fn missing_ood_class_and_bad_fractions() {
        assert!(matches!(
            make_splits(&[0, 1], 5, 0.24, 0.06, 0),
            Err(Error::OodClassMissing(5))
        ));
        assert!(matches!(
            make_splits(&[0, 1], 1, 0.7, 0.3, 0),
            Err(Error::FractionOverflow(_))
        ));
    }

    #[test]
    fn validate_catches_ood_in_train() {
        let s = Splits {
            train: vec![0],
            val: vec![],
            test: vec![1],
            ood_class: 7,
        };
        assert!(matches!(
            s.validate(&[7, 0]),
            Err(Error::OodLabelInTrainSet { node: 0, class: 7 })
        ));
        let overlap = Splits {
            train: vec![0],
            val: vec![0],
            test: vec![],
            ood_class: 7,
        };
        assert!(overlap.validate(&[0, 7]).is_err());
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut v: Vec<usize> = (0..50).collect();
        fisher_yates(&mut v, 3);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
