use oodhg::metrics::{
    aupr, auroc, fpr_at_95tpr, macro_f1, micro_f1, sweep_threshold, BinaryScoredSet, GridSpec, KPlusOnePrediction,
};
use proptest::prelude::*;

mod common;

use common::{brute_aupr, brute_fpr95, pairwise_auroc};

fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60)
        .prop_flat_map(|n| {
            (
                // a coarse grid forces ties; mixing in fine values keeps some distinct
                prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -5.0f64..5.0], n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(s, mut l)| {
            l[0] = true;
            l[1] = false;
            (s, l)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ranking_metrics_match_brute_force((scores, labels) in scored_set()) {
        let set = BinaryScoredSet::new(scores.clone(), labels.clone()).unwrap();
        prop_assert!((auroc(&set).unwrap() - pairwise_auroc(&scores, &labels)).abs() <= 1e-12);
        prop_assert!((aupr(&set).unwrap() - brute_aupr(&scores, &labels)).abs() <= 1e-12);
        prop_assert!((fpr_at_95tpr(&set).unwrap() - brute_fpr95(&scores, &labels)).abs() <= 1e-12);
    }

    #[test]
    fn auroc_invariant_under_increasing_transform((scores, labels) in scored_set()) {
        let a = auroc(&BinaryScoredSet::new(scores.clone(), labels.clone()).unwrap()).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (0.7 * s).exp() + 3.0).collect();
        let b = auroc(&BinaryScoredSet::new(warped, labels).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn micro_f1_is_accuracy(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..80)
    ) {
        let (predicted, gold): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
        let hits = pairs.iter().filter(|(p, g)| p == g).count();
        let p = KPlusOnePrediction::new(predicted, gold, 4).unwrap();
        prop_assert_eq!(micro_f1(&p).unwrap(), hits as f64 / pairs.len() as f64);
        let m = macro_f1(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }
}

#[test]
fn metric_ranges_and_errors() {
    let perfect = BinaryScoredSet::new(vec![3.0, 2.0, 1.0, 0.0], vec![true, true, false, false]).unwrap();
    assert_eq!(auroc(&perfect).unwrap(), 1.0);
    assert_eq!(aupr(&perfect).unwrap(), 1.0);
    assert_eq!(fpr_at_95tpr(&perfect).unwrap(), 0.0);

    let reversed = BinaryScoredSet::new(vec![0.0, 1.0, 2.0, 3.0], vec![true, true, false, false]).unwrap();
    assert_eq!(auroc(&reversed).unwrap(), 0.0);
    assert_eq!(fpr_at_95tpr(&reversed).unwrap(), 1.0);

    let one_class = BinaryScoredSet::new(vec![0.0, 1.0], vec![true, true]).unwrap();
    assert!(auroc(&one_class).is_err());
    assert!(fpr_at_95tpr(&one_class).is_err());
}

#[test]
fn sweep_recovers_planted_threshold() {
    // -E values: ID nodes above 1.5, OOD nodes at or below it
    let neg_energy = [0.4, 1.1, 1.5, 1.55, 1.9, 2.6, 3.0];
    let gold = [1, 1, 1, 0, 0, 0, 0];
    let grid = GridSpec::ENERGY.points();
    let result = sweep_threshold(&grid, |tau| {
        let predicted = neg_energy.iter().map(|&s| if s <= tau { 1 } else { 0 }).collect();
        KPlusOnePrediction::new(predicted, gold.to_vec(), 2)
    })
    .unwrap();
    assert_eq!(result.best_tau, 1.5);
    assert_eq!(result.best_f1, 1.0);
    assert_eq!(result.table.len(), 21);
}
