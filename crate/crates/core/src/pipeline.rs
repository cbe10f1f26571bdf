//! End-to-end runs: train, score every target node, pick τ, and report
//! detection and K+1 classification metrics on the test split.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{Dataset, Splits};
use crate::energy::{energy_scores, msp_score, propagate_and_fuse};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, MetaPath};
use crate::metrics::{
    aupr, auroc, fpr_at_95tpr, macro_f1, micro_f1, sweep_threshold, BinaryScoredSet, GridSpec, KPlusOnePrediction,
    SweepResult,
};
use crate::model::{self, argmax_rows, softmax_probs, TrainConfig, TrainHistory, TrainedModel};

/// Per-target-node scores from a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeScores {
    pub raw_energy: Vec<f64>,
    /// Energy after propagation and path averaging.
    pub energy: Vec<f64>,
    pub msp: Vec<f64>,
    /// Argmax over the K in-distribution classes (model indices).
    pub argmax: Vec<usize>,
}

pub fn score_nodes(graph: &HeteroGraph, model: &TrainedModel) -> Result<NodeScores> {
    let logits = model::forward(graph, &model.feature_paths, &model.params)?;
    let raw = energy_scores(&logits)?;
    let adjacencies = model::compose_propagation(graph, &model.propagation_paths, model.config.propagation)?;
    let refs: Vec<_> = adjacencies.iter().map(|a| a.as_ref()).collect();
    let fused = propagate_and_fuse(&raw, &refs, model.config.propagation)?;
    let probs = softmax_probs(&logits);
    Ok(NodeScores {
        raw_energy: raw.into_inner(),
        energy: fused.into_inner(),
        msp: msp_score(&probs)?,
        argmax: argmax_rows(&logits),
    })
}

/// K+1 predictions over `ids`: OOD bucket `K` when `-E <= τ`, otherwise the argmax class.
pub fn k_plus_one(
    scores: &NodeScores,
    model_labels: &[usize],
    ids: &[usize],
    k: usize,
    tau: f64,
) -> Result<KPlusOnePrediction> {
    let predicted = ids
        .iter()
        .map(|&i| if -scores.energy[i] <= tau { k } else { scores.argmax[i] })
        .collect();
    let gold = ids.iter().map(|&i| model_labels[i]).collect();
    KPlusOnePrediction::new(predicted, gold, k + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
}

/// Ranking metrics over `ids` with OOD as the positive class; `ood_score` is higher for more OOD-like nodes.
pub fn detection_metrics(ood_score: &[f64], is_ood: &[bool], ids: &[usize]) -> Result<DetectionMetrics> {
    let set = BinaryScoredSet::new(
        ids.iter().map(|&i| ood_score[i]).collect(),
        ids.iter().map(|&i| is_ood[i]).collect(),
    )?;
    Ok(DetectionMetrics {
        auroc: auroc(&set)?,
        aupr: aupr(&set)?,
        fpr95: fpr_at_95tpr(&set)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSplit {
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauSelection {
    Fixed(f64),
    Sweep { grid: Vec<f64>, split: SweepSplit },
}

impl Default for TauSelection {
    fn default() -> Self {
        TauSelection::Sweep {
            grid: GridSpec::ENERGY.points(),
            split: SweepSplit::Val,
        }
    }
}

/// The `metrics.json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub aupr: f64,
    pub fpr95: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub tau: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub config_echo: Value,
}

impl MetricsReport {
    /// Pretty-printed with a trailing newline; field order is fixed by the struct.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Raw (unpropagated) energy on the same test nodes.
    pub raw_energy: DetectionMetrics,
    /// Maximum-softmax-probability baseline on the same test nodes.
    pub msp: DetectionMetrics,
    pub sweep: Option<SweepResult>,
    pub scores: NodeScores,
    pub test_predictions: KPlusOnePrediction,
    pub tau: f64,
}

pub fn evaluate(
    graph: &HeteroGraph,
    labels: &[usize],
    splits: &Splits,
    model: &TrainedModel,
    tau: &TauSelection,
    config_echo: Value,
) -> Result<Evaluation> {
    if model.label_map.ood_class != splits.ood_class {
        return Err(Error::InvalidConfig(format!(
            "checkpoint was trained with OOD class {} but the splits use {}",
            model.label_map.ood_class, splits.ood_class
        )));
    }
    let scores = score_nodes(graph, model)?;
    let k = model.label_map.k();
    let model_labels = model.label_map.map_all(labels);
    let is_ood: Vec<bool> = labels.iter().map(|&l| l == splits.ood_class).collect();

    let (tau, sweep) = match tau {
        TauSelection::Fixed(t) => (*t, None),
        TauSelection::Sweep { grid, split } => {
            let ids = match split {
                SweepSplit::Val => &splits.val,
                SweepSplit::Test => &splits.test,
            };
            let result = sweep_threshold(grid, |t| k_plus_one(&scores, &model_labels, ids, k, t))?;
            (result.best_tau, Some(result))
        }
    };

    let test = &splits.test;
    let detection = detection_metrics(&scores.energy, &is_ood, test)?;
    let raw_energy = detection_metrics(&scores.raw_energy, &is_ood, test)?;
    let neg_msp: Vec<f64> = scores.msp.iter().map(|p| -p).collect();
    let msp = detection_metrics(&neg_msp, &is_ood, test)?;
    let test_predictions = k_plus_one(&scores, &model_labels, test, k, tau)?;

    let report = MetricsReport {
        auroc: detection.auroc,
        aupr: detection.aupr,
        fpr95: detection.fpr95,
        micro_f1: micro_f1(&test_predictions)?,
        macro_f1: macro_f1(&test_predictions)?,
        tau,
        n_train: splits.train.len(),
        n_val: splits.val.len(),
        n_test: test.len(),
        n_ood: test.iter().filter(|&&i| is_ood[i]).count(),
        config_echo,
    };
    Ok(Evaluation {
        report,
        raw_energy,
        msp,
        sweep,
        scores,
        test_predictions,
        tau,
    })
}

/// `scores.tsv` rows for the test split: node id, energy, max softmax, predicted label, gold label.
///
/// Labels are dataset labels; OOD predictions carry the OOD class id.
pub fn scores_tsv(eval: &Evaluation, splits: &Splits, labels: &[usize], model: &TrainedModel) -> String {
    let mut out = String::new();
    let k = model.label_map.k();
    for &i in &splits.test {
        let predicted = if -eval.scores.energy[i] <= eval.tau {
            model.label_map.to_dataset(k)
        } else {
            model.label_map.to_dataset(eval.scores.argmax[i])
        };
        out.push_str(&format!(
            "{i}\t{}\t{}\t{predicted}\t{}\n",
            eval.scores.energy[i], eval.scores.msp[i], labels[i]
        ));
    }
    out
}

/// The four configurations of the component ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    /// Plain classifier, raw energy: `α = 1`, no propagation.
    NoPropagationNoEnergyLoss,
    /// Propagation only: `α = 1`, `k` steps.
    PropagationOnly,
    /// Energy loss only: configured `α`, no propagation.
    EnergyLossOnly,
    /// Both components.
    Full,
}

impl Arm {
    pub const ALL: [Arm; 4] = [
        Arm::NoPropagationNoEnergyLoss,
        Arm::PropagationOnly,
        Arm::EnergyLossOnly,
        Arm::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arm::NoPropagationNoEnergyLoss => "w/o EP and L_E",
            Arm::PropagationOnly => "w/o L_E",
            Arm::EnergyLossOnly => "w/o EP",
            Arm::Full => "OODHG",
        }
    }

    pub fn config(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            Arm::NoPropagationNoEnergyLoss => {
                cfg.alpha = 1.0;
                cfg.propagation.steps = 0;
            }
            Arm::PropagationOnly => cfg.alpha = 1.0,
            Arm::EnergyLossOnly => cfg.propagation.steps = 0,
            Arm::Full => {}
        }
        cfg
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a single seeded run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub splits: Splits,
    pub evaluation: Evaluation,
}

/// Paths and thresholds shared by every run on one dataset.
#[derive(Clone, Debug)]
pub struct RunPlan {
    pub ood_class: usize,
    pub feature_paths: Vec<MetaPath>,
    pub propagation_paths: Vec<MetaPath>,
    pub tau: TauSelection,
}

impl RunPlan {
    pub fn for_dataset(dataset: &Dataset, ood_class: usize) -> Self {
        Self {
            ood_class,
            feature_paths: dataset.feature_paths(),
            propagation_paths: dataset.propagation_paths(),
            tau: TauSelection::default(),
        }
    }
}

/// Trains with `config` (its seed also drives the split when the dataset has none) and evaluates.
pub fn run_once(dataset: &Dataset, plan: &RunPlan, config: &TrainConfig, config_echo: Value) -> Result<RunOutcome> {
    let splits = dataset.splits_or_make(plan.ood_class, config.seed)?;
    let (model, history) = model::train(
        &dataset.graph,
        &dataset.labels,
        &splits,
        &plan.feature_paths,
        &plan.propagation_paths,
        config,
    )?;
    let evaluation = evaluate(&dataset.graph, &dataset.labels, &splits, &model, &plan.tau, config_echo)?;
    Ok(RunOutcome {
        model,
        history,
        splits,
        evaluation,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Aggregated headline metrics over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auroc: MeanStd,
    pub aupr: MeanStd,
    pub fpr95: MeanStd,
    pub micro_f1: MeanStd,
    pub macro_f1: MeanStd,
}

impl MetricSummary {
    pub fn of(reports: &[&MetricsReport]) -> Self {
        let pick = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
        Self {
            auroc: pick(|r| r.auroc),
            aupr: pick(|r| r.aupr),
            fpr95: pick(|r| r.fpr95),
            micro_f1: pick(|r| r.micro_f1),
            macro_f1: pick(|r| r.macro_f1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arm_configs() {
        let base = TrainConfig {
            alpha: 0.4,
            ..TrainConfig::default()
        };
        let k = base.propagation.steps;
        let got: Vec<(f64, usize)> = Arm::ALL
            .iter()
            .map(|a| {
                let c = a.config(&base);
                (c.alpha, c.propagation.steps)
            })
            .collect();
        assert_eq!(got, vec![(1.0, 0), (1.0, k), (0.4, 0), (0.4, k)]);
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!(MeanStd::of(&[4.0]).std, 0.0);
    }
}
