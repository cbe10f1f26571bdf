//! Browser-independent state behind the demo page.
//!
//! A [`Session`] trains once, then answers two cheap queries without
//! retraining: re-propagating the stored raw energies with a different `γ`
//! and `k`, and classifying the test nodes at a threshold `τ`.

use std::sync::Arc;

use oodhg::data::{generate_synthetic, SynthConfig};
use oodhg::energy::{EnergyVector, PropagationConfig, Propagator};
use oodhg::metrics::{macro_f1, micro_f1};
use oodhg::model::TrainConfig;
use oodhg::pipeline::{detection_metrics, k_plus_one, run_once, DetectionMetrics, NodeScores, RunPlan};
use oodhg::sparse::SparseRowMatrix;
use oodhg::Result;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub per_class: usize,
    pub separation: f64,
    pub ood_shift: f64,
    pub intra: f64,
    pub inter: f64,
    pub seed: u64,
    pub epochs: usize,
    pub hidden: usize,
    pub alpha: f64,
    pub m_in: f64,
    pub gamma: f64,
    pub steps: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let s = SynthConfig::default();
        let t = TrainConfig::default();
        Self {
            per_class: 100,
            separation: s.class_separation,
            ood_shift: s.ood_shift,
            intra: s.intra_edge_prob,
            inter: s.inter_edge_prob,
            seed: 0,
            epochs: t.epochs,
            hidden: 32,
            alpha: t.alpha,
            m_in: t.m_in,
            gamma: t.propagation.gamma,
            steps: t.propagation.steps,
        }
    }
}

/// Points of an ROC curve, from (0, 0) to (1, 1).
#[derive(Clone, Debug, Serialize)]
pub struct Roc {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Counts of `-E` for test nodes in equal-width bins.
#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub id: Vec<usize>,
    pub ood: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Curve {
    pub name: &'static str,
    pub metrics: DetectionMetrics,
    pub roc: Roc,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagationView {
    pub gamma: f64,
    pub steps: usize,
    /// Propagated energy, raw energy and MSP on the test split.
    pub curves: Vec<Curve>,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdView {
    pub tau: f64,
    /// OOD nodes flagged as OOD.
    pub caught: usize,
    /// ID nodes flagged as OOD.
    pub false_alarms: usize,
    pub n_ood: usize,
    pub n_id: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub n_nodes: usize,
    pub n_test: usize,
    pub n_ood: usize,
    pub best_epoch: usize,
    pub train_energy: Vec<f64>,
}

pub struct Session {
    adjacencies: Vec<Arc<SparseRowMatrix>>,
    scores: NodeScores,
    model_labels: Vec<usize>,
    k: usize,
    test: Vec<usize>,
    is_ood: Vec<bool>,
    summary: Summary,
}

pub const HISTOGRAM_BINS: usize = 30;

/// ROC points at every distinct score, higher score meaning more likely positive.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Roc {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let p = positive.iter().filter(|&&x| x).count().max(1) as f64;
    let n = positive.iter().filter(|&&x| !x).count().max(1) as f64;
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0.0, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        // emit only after the last of a run of tied scores
        let tie_continues = order.get(rank + 1).is_some_and(|&j| scores[j] == scores[i]);
        if !tie_continues {
            fpr.push(fp / n);
            tpr.push(tp / p);
        }
    }
    Roc { fpr, tpr }
}

impl Session {
    pub fn train(settings: &Settings) -> Result<Self> {
        let synth = SynthConfig {
            nodes_per_class: settings.per_class,
            class_separation: settings.separation,
            ood_shift: settings.ood_shift,
            intra_edge_prob: settings.intra,
            inter_edge_prob: settings.inter,
            seed: settings.seed,
            ..SynthConfig::default()
        };
        let dataset = generate_synthetic(&synth)?;
        let config = TrainConfig {
            epochs: settings.epochs,
            d_hidden: settings.hidden,
            alpha: settings.alpha,
            m_in: settings.m_in,
            propagation: PropagationConfig {
                gamma: settings.gamma,
                steps: settings.steps,
            },
            seed: settings.seed,
            ..TrainConfig::default()
        };
        let ood = synth.ood_class();
        let out = run_once(
            &dataset,
            &RunPlan::for_dataset(&dataset, ood),
            &config,
            serde_json::Value::Null,
        )?;
        let adjacencies = out
            .model
            .propagation_paths
            .iter()
            .map(|p| dataset.graph.compose_metapath(p))
            .collect::<Result<_>>()?;
        let is_ood: Vec<bool> = dataset.labels.iter().map(|&l| l == ood).collect();
        let summary = Summary {
            n_nodes: dataset.labels.len(),
            n_test: out.splits.test.len(),
            n_ood: is_ood.iter().filter(|&&x| x).count(),
            best_epoch: out.history.best_epoch,
            train_energy: std::iter::once(&out.history.initial)
                .chain(&out.history.records)
                .map(|r| r.mean_train_energy)
                .collect(),
        };
        Ok(Self {
            adjacencies,
            scores: out.evaluation.scores,
            model_labels: out.model.label_map.map_all(&dataset.labels),
            k: out.model.label_map.k(),
            test: out.splits.test,
            is_ood,
            summary,
        })
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    /// Re-propagates the stored raw energies; later thresholds use the result.
    pub fn propagate(&mut self, gamma: f64, steps: usize) -> Result<PropagationView> {
        let raw = EnergyVector::new(self.scores.raw_energy.clone())?;
        let propagator = Propagator::new(self.adjacencies.clone(), PropagationConfig { gamma, steps })?;
        self.scores.energy = propagator.run(&raw)?.values().to_vec();

        let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| -x).collect() };
        let test_pick = |v: &[f64]| -> Vec<f64> { self.test.iter().map(|&i| v[i]).collect() };
        let test_ood: Vec<bool> = self.test.iter().map(|&i| self.is_ood[i]).collect();
        // every score is oriented so that larger means more likely OOD
        let sources = [
            ("propagated energy", self.scores.energy.clone()),
            ("raw energy", self.scores.raw_energy.clone()),
            ("MSP", neg(&self.scores.msp)),
        ];
        let mut curves = Vec::with_capacity(sources.len());
        for (name, score) in sources {
            curves.push(Curve {
                name,
                metrics: detection_metrics(&score, &self.is_ood, &self.test)?,
                roc: roc_curve(&test_pick(&score), &test_ood),
            });
        }
        Ok(PropagationView {
            gamma,
            steps,
            curves,
            histogram: self.histogram(),
        })
    }

    fn histogram(&self) -> Histogram {
        let values: Vec<f64> = self.test.iter().map(|&i| -self.scores.energy[i]).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / HISTOGRAM_BINS as f64).max(f64::MIN_POSITIVE);
        let mut id = vec![0; HISTOGRAM_BINS];
        let mut ood = vec![0; HISTOGRAM_BINS];
        for (&i, v) in self.test.iter().zip(&values) {
            let bin = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
            if self.is_ood[i] {
                ood[bin] += 1;
            } else {
                id[bin] += 1;
            }
        }
        Histogram { lo, hi, id, ood }
    }

    /// Test nodes with `-E <= tau` are flagged OOD.
    pub fn threshold(&self, tau: f64) -> Result<ThresholdView> {
        let prediction = k_plus_one(&self.scores, &self.model_labels, &self.test, self.k, tau)?;
        let flagged = |want_ood: bool| {
            self.test
                .iter()
                .filter(|&&i| self.is_ood[i] == want_ood && -self.scores.energy[i] <= tau)
                .count()
        };
        let n_ood = self.test.iter().filter(|&&i| self.is_ood[i]).count();
        Ok(ThresholdView {
            tau,
            caught: flagged(true),
            false_alarms: flagged(false),
            n_ood,
            n_id: self.test.len() - n_ood,
            micro_f1: micro_f1(&prediction)?,
            macro_f1: macro_f1(&prediction)?,
        })
    }
}
