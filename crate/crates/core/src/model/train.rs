//! Full-batch Adam training with best-validation model selection.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_rows, EncoderParams, FeatureInputs, LabelMap, Objective};
use crate::data::Splits;
use crate::energy::PropagationConfig;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, MetaPath};
use crate::sparse::SparseRowMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub m_in: f64,
    #[serde(flatten)]
    pub propagation: PropagationConfig,
    pub seed: u64,
    pub d_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 50,
            alpha: 0.5,
            m_in: -3.0,
            propagation: PropagationConfig::default(),
            seed: 0,
            d_hidden: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !self.m_in.is_finite() {
            return Err(Error::InvalidConfig("m_in must be finite".into()));
        }
        if self.d_hidden == 0 {
            return Err(Error::InvalidConfig("d_hidden must be at least 1".into()));
        }
        self.propagation.validate()
    }
}

/// Adaptive moment estimation with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: EncoderParams,
    second: EncoderParams,
    t: i32,
}

impl Adam {
    pub fn new(learning_rate: f64, like: &EncoderParams) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: like.zeros_like(),
            second: like.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let grads = grads.tensors();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(grads);
        for (((p, m), v), g) in tensors {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total_loss: f64,
    pub classification_loss: f64,
    pub energy_loss: f64,
    pub val_micro_f1: f64,
    /// Mean pre-propagation energy of the training nodes.
    pub mean_train_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// State before the first update.
    pub initial: EpochRecord,
    /// One record per update, taken after that update.
    pub records: Vec<EpochRecord>,
    /// Epoch of the returned parameters.
    pub best_epoch: usize,
}

pub struct Trainer<'a> {
    objective: Objective<'a>,
    val_ids: &'a [usize],
    params: EncoderParams,
    adam: Adam,
    initial: EpochRecord,
    records: Vec<EpochRecord>,
    best: (f64, usize, EncoderParams),
}

impl<'a> Trainer<'a> {
    /// `labels` are model classes per node (OOD nodes may carry `K`; they are never read).
    pub fn new(
        inputs: &'a FeatureInputs,
        adjacencies: Vec<Arc<SparseRowMatrix>>,
        labels: &'a [usize],
        train_ids: &'a [usize],
        val_ids: &'a [usize],
        n_classes: usize,
        config: &TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if train_ids.is_empty() {
            return Err(Error::EmptyTrainSet);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = EncoderParams::init(&inputs.input_dims(), config.d_hidden, n_classes, &mut rng)?;
        let objective = Objective {
            inputs,
            adjacencies,
            labels,
            train_ids,
            alpha: config.alpha,
            m_in: config.m_in,
            propagation: config.propagation,
        };
        let adam = Adam::new(config.learning_rate, &params);
        let initial = record(&objective, val_ids, &params, 0)?;
        let best = (f64::NEG_INFINITY, 0, params.clone());
        Ok(Self {
            objective,
            val_ids,
            params,
            adam,
            initial,
            records: Vec::new(),
            best,
        })
    }

    pub fn params(&self) -> &EncoderParams {
        &self.params
    }

    pub fn steps_taken(&self) -> usize {
        self.records.len()
    }

    /// One full-batch update followed by a record of the new state.
    pub fn step(&mut self) -> Result<&EpochRecord> {
        let (_, grads) = self.objective.gradients(&self.params)?;
        self.adam.step(&mut self.params, &grads);
        let epoch = self.records.len() + 1;
        let rec = record(&self.objective, self.val_ids, &self.params, epoch)?;
        if rec.val_micro_f1 > self.best.0 {
            self.best = (rec.val_micro_f1, epoch, self.params.clone());
        }
        self.records.push(rec);
        Ok(self.records.last().unwrap())
    }

    /// Best-validation parameters (earliest on ties) and the full history.
    pub fn finish(self) -> (EncoderParams, TrainHistory) {
        let (params, best_epoch) = if self.records.is_empty() {
            (self.params, 0)
        } else {
            (self.best.2, self.best.1)
        };
        (
            params,
            TrainHistory {
                initial: self.initial,
                records: self.records,
                best_epoch,
            },
        )
    }
}

fn record(objective: &Objective<'_>, val_ids: &[usize], params: &EncoderParams, epoch: usize) -> Result<EpochRecord> {
    let ev = objective.evaluate_full(params)?;
    let raw = ev.raw.values();
    let mean_train_energy = objective.train_ids.iter().map(|&i| raw[i]).sum::<f64>() / objective.train_ids.len() as f64;
    let val_micro_f1 = if val_ids.is_empty() {
        0.0
    } else {
        let pred = argmax_rows(&ev.pass.logits);
        let hits = val_ids.iter().filter(|&&i| pred[i] == objective.labels[i]).count();
        hits as f64 / val_ids.len() as f64
    };
    Ok(EpochRecord {
        epoch,
        total_loss: ev.loss.total,
        classification_loss: ev.loss.classification,
        energy_loss: ev.loss.energy,
        val_micro_f1,
        mean_train_energy,
    })
}

/// A trained encoder together with everything needed to score a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub label_map: LabelMap,
    pub feature_paths: Vec<MetaPath>,
    pub propagation_paths: Vec<MetaPath>,
    pub config: TrainConfig,
}

/// Trains on `splits.train` and selects parameters by validation micro-F1.
///
/// `labels` are dataset labels for every target node. Propagation paths must
/// be target-to-target; an empty list, zero steps or `γ = 1` disables propagation.
pub fn train(
    graph: &HeteroGraph,
    labels: &[usize],
    splits: &Splits,
    feature_paths: &[MetaPath],
    propagation_paths: &[MetaPath],
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainHistory)> {
    config.validate()?;
    let n = graph.target_count();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    splits.validate(labels)?;
    if splits.train.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let label_map = LabelMap::new(labels, splits.ood_class)?;
    let model_labels = label_map.map_all(labels);
    let inputs = FeatureInputs::from_graph(graph, feature_paths)?;
    let adjacencies = compose_propagation(graph, propagation_paths, config.propagation)?;

    let mut trainer = Trainer::new(
        &inputs,
        adjacencies,
        &model_labels,
        &splits.train,
        &splits.val,
        label_map.k(),
        config,
    )?;
    for _ in 0..config.epochs {
        trainer.step()?;
    }
    let (params, history) = trainer.finish();
    Ok((
        TrainedModel {
            params,
            label_map,
            feature_paths: feature_paths.to_vec(),
            propagation_paths: propagation_paths.to_vec(),
            config: config.clone(),
        },
        history,
    ))
}

/// Composed adjacencies for propagation, or none when propagation is the identity.
pub fn compose_propagation(
    graph: &HeteroGraph,
    paths: &[MetaPath],
    config: PropagationConfig,
) -> Result<Vec<Arc<SparseRowMatrix>>> {
    if config.is_identity() {
        return Ok(Vec::new());
    }
    let target = graph.target_type();
    paths
        .iter()
        .map(|p| {
            if p.start() != target || p.end() != target || p.hops() == 0 {
                return Err(Error::InvalidPath {
                    path: p.to_string(),
                    reason: format!("propagation paths must run from `{target}` back to `{target}`"),
                });
            }
            graph.compose_metapath(p)
        })
        .collect()
}
