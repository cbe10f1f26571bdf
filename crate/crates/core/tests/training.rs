use oodhg::checkpoint;
use oodhg::data::{generate_synthetic, Dataset, Splits, SynthConfig};
use oodhg::model::{argmax_rows, forward, train, TrainConfig, TrainHistory, TrainedModel};
use oodhg::Error;

fn dataset(seed: u64) -> Dataset {
    generate_synthetic(&SynthConfig {
        nodes_per_class: 40,
        aux_per_community: 5,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

/// Well-separated class means; the train split is essentially linearly separable.
fn separable(seed: u64) -> Dataset {
    generate_synthetic(&SynthConfig {
        class_separation: 6.0,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn fit(ds: &Dataset, splits: &Splits, config: &TrainConfig) -> oodhg::Result<(TrainedModel, TrainHistory)> {
    train(
        &ds.graph,
        &ds.labels,
        splits,
        &ds.feature_paths(),
        &ds.propagation_paths(),
        config,
    )
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        d_hidden: 16,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_history_and_checkpoint() {
    let ds = dataset(1);
    let splits = ds.splits_or_make(3, 1).unwrap();
    let (m1, h1) = fit(&ds, &splits, &small_config(5)).unwrap();
    let (m2, h2) = fit(&ds, &splits, &small_config(5)).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(checkpoint::to_json(&m1).unwrap(), checkpoint::to_json(&m2).unwrap());
    let (m3, _) = fit(&ds, &splits, &small_config(6)).unwrap();
    assert_ne!(m1.params, m3.params);
}

#[test]
fn epoch_count_is_exact() {
    let ds = dataset(2);
    let splits = ds.splits_or_make(3, 2).unwrap();
    let one = TrainConfig {
        epochs: 1,
        ..small_config(0)
    };
    let (_, h) = fit(&ds, &splits, &one).unwrap();
    assert_eq!(h.records.len(), 1);
    assert_eq!(h.records[0].epoch, 1);
    assert_eq!(h.initial.epoch, 0);
    assert_ne!(h.records[0].total_loss, h.initial.total_loss);

    let zero = TrainConfig {
        epochs: 0,
        ..small_config(0)
    };
    assert!(matches!(fit(&ds, &splits, &zero), Err(Error::InvalidConfig(_))));
}

#[test]
fn test_labels_do_not_influence_training() {
    let ds = dataset(3);
    let splits = ds.splits_or_make(3, 3).unwrap();
    let (_, before) = fit(&ds, &splits, &small_config(1)).unwrap();
    let mut perturbed = ds.clone();
    for &i in &splits.test {
        // rotate ID labels among themselves; OOD labels stay OOD
        if perturbed.labels[i] < 3 {
            perturbed.labels[i] = (perturbed.labels[i] + 1) % 3;
        }
    }
    let (_, after) = fit(&perturbed, &splits, &small_config(1)).unwrap();
    assert_eq!(before, after);
}

#[test]
fn ood_nodes_in_train_are_rejected() {
    let ds = dataset(4);
    let mut splits = ds.splits_or_make(3, 4).unwrap();
    let ood = *splits.test.iter().find(|&&i| ds.labels[i] == 3).unwrap();
    splits.test.retain(|&i| i != ood);
    splits.train.push(ood);
    assert!(matches!(
        fit(&ds, &splits, &small_config(0)),
        Err(Error::OodLabelInTrainSet { .. })
    ));
    let empty = Splits {
        train: Vec::new(),
        ..ds.splits_or_make(3, 4).unwrap()
    };
    assert!(matches!(fit(&ds, &empty, &small_config(0)), Err(Error::EmptyTrainSet)));
}

#[test]
fn separable_instance_fits_training_nodes() {
    for seed in 0..3 {
        let ds = separable(seed);
        let splits = ds.splits_or_make(3, seed).unwrap();
        let (model, history) = fit(
            &ds,
            &splits,
            &TrainConfig {
                seed,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let pred = argmax_rows(&forward(&ds.graph, &model.feature_paths, &model.params).unwrap());
        let hits = splits.train.iter().filter(|&&i| pred[i] == ds.labels[i]).count();
        let f1 = hits as f64 / splits.train.len() as f64;
        assert!(f1 >= 0.95, "seed {seed}: train micro-F1 {f1}");
        let last = history.records.last().unwrap();
        assert!(last.mean_train_energy < history.initial.mean_train_energy);
        assert_eq!(history.records.len(), 50);
    }
}

#[test]
fn alpha_one_total_is_classification_loss() {
    let ds = dataset(5);
    let splits = ds.splits_or_make(3, 5).unwrap();
    let (_, h) = fit(
        &ds,
        &splits,
        &TrainConfig {
            alpha: 1.0,
            ..small_config(2)
        },
    )
    .unwrap();
    for r in std::iter::once(&h.initial).chain(&h.records) {
        assert_eq!(r.total_loss.to_bits(), r.classification_loss.to_bits());
    }
}
