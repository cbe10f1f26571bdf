//! OOD detection and K+1 classification metrics.
//!
//! Ranking metrics treat OOD as the positive class and expect an OOD-ness
//! score (higher = more OOD), normally the propagated energy.
//!
//! Tie handling is fixed so results are reproducible:
//! - AUROC gives half credit to tied (positive, negative) pairs.
//! - AUPR walks scores in descending order, breaking ties by ascending index.
//! - FPR@95 predicts positive iff `score >= t`, for `t` over the distinct
//!   scores and `+inf`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl BinaryScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("score is NaN".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    fn require_both(&self) -> Result<(usize, usize)> {
        let (p, n) = (self.positives(), self.negatives());
        if p == 0 || n == 0 {
            return Err(Error::DegenerateLabels);
        }
        Ok((p, n))
    }

    /// Indices in descending score order, ties by ascending index.
    fn descending_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| {
            self.scores[b]
                .partial_cmp(&self.scores[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        order
    }
}

/// Area under the ROC curve, equal to the Mann–Whitney statistic with half credit for ties.
pub fn auroc(s: &BinaryScoredSet) -> Result<f64> {
    let (p, n) = s.require_both()?;
    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap_or(Ordering::Equal));

    // Twice the positive rank sum, using mid-ranks for tie groups, stays integral.
    let mut twice_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && s.scores[order[end]] == s.scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end, mid-rank (start + 1 + end) / 2
        let twice_mid = (start + 1 + end) as u64;
        let pos_in_group = order[start..end].iter().filter(|&&i| s.labels[i]).count() as u64;
        twice_rank_sum += twice_mid * pos_in_group;
        start = end;
    }
    let (p64, n64) = (p as u64, n as u64);
    let twice_u = twice_rank_sum - p64 * (p64 + 1);
    Ok(twice_u as f64 / (2 * p64 * n64) as f64)
}

/// Average precision of the OOD class.
pub fn aupr(s: &BinaryScoredSet) -> Result<f64> {
    let p = s.positives();
    if p == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, i) in s.descending_order().into_iter().enumerate() {
        if s.labels[i] {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// Smallest false-positive rate among thresholds reaching a true-positive rate of at least 95%.
pub fn fpr_at_95tpr(s: &BinaryScoredSet) -> Result<f64> {
    let (p, n) = s.require_both()?;
    let order = s.descending_order();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = usize::MAX;
    let mut k = 0;
    // Thresholds are visited from +inf downward; each tie group enters at once.
    while k < order.len() {
        let t = s.scores[order[k]];
        while k < order.len() && s.scores[order[k]] == t {
            if s.labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        // tp / p >= 0.95, in integers
        if 20 * tp >= 19 * p {
            best = best.min(fp);
            break;
        }
    }
    Ok(best as f64 / n as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KPlusOnePrediction {
    predicted: Vec<usize>,
    gold: Vec<usize>,
    n_classes: usize,
}

impl KPlusOnePrediction {
    /// `n_classes` is `K + 1`; class `K` is the OOD bucket.
    pub fn new(predicted: Vec<usize>, gold: Vec<usize>, n_classes: usize) -> Result<Self> {
        if predicted.len() != gold.len() {
            return Err(Error::LengthMismatch {
                expected: gold.len(),
                got: predicted.len(),
            });
        }
        if let Some(&label) = predicted.iter().chain(&gold).find(|&&c| c >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        Ok(Self {
            predicted,
            gold,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    /// `confusion[gold][predicted]` counts.
    pub fn confusion(&self) -> Vec<Vec<usize>> {
        let mut m = vec![vec![0usize; self.n_classes]; self.n_classes];
        for (&g, &p) in self.gold.iter().zip(&self.predicted) {
            m[g][p] += 1;
        }
        m
    }
}

/// Global F1, which for single-label predictions equals accuracy.
pub fn micro_f1(p: &KPlusOnePrediction) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty);
    }
    let confusion = p.confusion();
    let tp: usize = (0..p.n_classes).map(|c| confusion[c][c]).sum();
    // Every mistake is one false positive and one false negative, so precision
    // equals recall and F1 equals both. Returning the ratio directly keeps it
    // bit-identical to accuracy.
    Ok(tp as f64 / p.len() as f64)
}

/// Unweighted mean of per-class F1 over all K+1 classes; a class with no
/// true positives (including one absent from both gold and prediction) scores 0.
pub fn macro_f1(p: &KPlusOnePrediction) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::Empty);
    }
    let confusion = p.confusion();
    let total: f64 = (0..p.n_classes)
        .map(|c| {
            let tp = confusion[c][c];
            let gold_c: usize = confusion[c].iter().sum();
            let pred_c: usize = confusion.iter().map(|row| row[c]).sum();
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (gold_c + pred_c) as f64
            }
        })
        .sum();
    Ok(total / p.n_classes as f64)
}

/// Inclusive arithmetic grid `start, start + step, …, stop`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridSpec {
    /// Candidate thresholds on `-E` used for energy detection.
    pub const ENERGY: GridSpec = GridSpec {
        start: 1.0,
        stop: 2.0,
        step: 0.05,
    };

    /// Candidate thresholds on the maximum softmax probability.
    pub const SOFTMAX: GridSpec = GridSpec {
        start: 0.5,
        stop: 0.9,
        step: 0.05,
    };

    /// Points are computed as `start + i·step` and rounded to 1e-9 so that
    /// `1.00, 1.05, …` print and compare cleanly.
    pub fn points(&self) -> Vec<f64> {
        if !(self.step > 0.0) || self.stop < self.start {
            return vec![self.start];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best_tau: f64,
    pub best_f1: f64,
    /// `(tau, micro_f1)` per grid point, in grid order.
    pub table: Vec<(f64, f64)>,
}

/// Evaluates K+1 micro-F1 for every threshold and returns the best, ties to the smallest τ.
///
/// `predict(τ)` must return the K+1 predictions made at threshold τ.
pub fn sweep_threshold(
    grid: &[f64],
    mut predict: impl FnMut(f64) -> Result<KPlusOnePrediction>,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Empty);
    }
    let mut table = Vec::with_capacity(grid.len());
    for &tau in grid {
        table.push((tau, micro_f1(&predict(tau)?)?));
    }
    let (best_tau, best_f1) = table
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (t, f)| {
            if f > best.1 || (f == best.1 && t < best.0) {
                (t, f)
            } else {
                best
            }
        });
    Ok(SweepResult {
        best_tau,
        best_f1,
        table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[bool]) -> BinaryScoredSet {
        BinaryScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn perfect_ranking() {
        let s = set(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]);
        assert_eq!(auroc(&s).unwrap(), 1.0);
        assert_eq!(aupr(&s).unwrap(), 1.0);
        assert_eq!(fpr_at_95tpr(&s).unwrap(), 0.0);
    }

    #[test]
    fn all_ties() {
        let s = set(&[1.0; 6], &[true, false, true, false, false, false]);
        assert_eq!(auroc(&s).unwrap(), 0.5);
        assert_eq!(fpr_at_95tpr(&s).unwrap(), 1.0);
    }

    #[test]
    fn single_positive_last() {
        let s = set(&[5.0, 4.0, 3.0, 2.0, 1.0], &[false, false, false, false, true]);
        assert!((aupr(&s).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(auroc(&s).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_labels_rejected() {
        let s = set(&[1.0, 2.0], &[false, false]);
        assert!(matches!(auroc(&s), Err(Error::DegenerateLabels)));
        assert!(matches!(aupr(&s), Err(Error::DegenerateLabels)));
        assert!(matches!(fpr_at_95tpr(&s), Err(Error::DegenerateLabels)));
        let only_pos = set(&[1.0], &[true]);
        assert_eq!(aupr(&only_pos).unwrap(), 1.0);
        assert!(auroc(&only_pos).is_err());
    }

    #[test]
    fn f1_identity() {
        let p = KPlusOnePrediction::new(vec![0, 1, 2], vec![0, 1, 2], 3).unwrap();
        assert_eq!(micro_f1(&p).unwrap(), 1.0);
        assert_eq!(macro_f1(&p).unwrap(), 1.0);
    }

    #[test]
    fn hand_confusion_two_classes() {
        // gold [0,0,0,1], predicted [0,0,0,0]: class 1 fully missed.
        // class 0: tp 3, gold 3, pred 4 -> F1 = 6/7; class 1: F1 = 0
        let p = KPlusOnePrediction::new(vec![0, 0, 0, 0], vec![0, 0, 0, 1], 2).unwrap();
        assert_eq!(micro_f1(&p).unwrap(), 0.75);
        assert!((macro_f1(&p).unwrap() - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_count_as_zero() {
        let p = KPlusOnePrediction::new(vec![0; 4], vec![0; 4], 3).unwrap();
        assert_eq!(micro_f1(&p).unwrap(), 1.0);
        assert!((macro_f1(&p).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_predictions_rejected() {
        let p = KPlusOnePrediction::new(vec![], vec![], 2).unwrap();
        assert!(matches!(micro_f1(&p), Err(Error::Empty)));
        assert!(matches!(macro_f1(&p), Err(Error::Empty)));
        assert!(KPlusOnePrediction::new(vec![3], vec![0], 3).is_err());
    }

    #[test]
    fn default_energy_grid_has_21_points() {
        let pts = GridSpec::ENERGY.points();
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[0], 1.0);
        assert_eq!(pts[9], 1.45);
        assert_eq!(pts[20], 2.0);
        assert_eq!(GridSpec::SOFTMAX.points().len(), 9);
    }

    #[test]
    fn singleton_grid() {
        let r = sweep_threshold(&[1.3], |_| KPlusOnePrediction::new(vec![0], vec![1], 2)).unwrap();
        assert_eq!(r.best_tau, 1.3);
        assert!(sweep_threshold(&[], |_| KPlusOnePrediction::new(vec![], vec![], 1)).is_err());
    }

    #[test]
    fn sweep_recovers_planted_threshold() {
        // ID nodes have -E in {3, 2.5, 1.6}; OOD nodes have -E in {1.0, 1.2, 1.5}.
        // Any τ in [1.5, 1.6) separates them perfectly; the smallest grid point there is 1.5.
        let neg_e = [3.0, 2.5, 1.6, 1.0, 1.2, 1.5];
        let gold = vec![0, 1, 0, 2, 2, 2];
        let argmax = [0, 1, 0, 1, 0, 1];
        let grid = GridSpec::ENERGY.points();
        let r = sweep_threshold(&grid, |tau| {
            let pred = neg_e
                .iter()
                .zip(argmax)
                .map(|(&s, a)| if s <= tau { 2 } else { a })
                .collect();
            KPlusOnePrediction::new(pred, gold.clone(), 3)
        })
        .unwrap();
        assert_eq!(r.best_tau, 1.5);
        assert_eq!(r.best_f1, 1.0);
        assert_eq!(r.table.len(), 21);
    }
}
