//! Meta-path encoder, softmax classifier and the joint classification/energy loss.
//!
//! The encoder projects each meta-path feature matrix into a shared hidden
//! width, concatenates the projections and maps them through a two-layer
//! perceptron (ReLU hidden layer) to `K` logits.

mod grad;
mod train;

pub use grad::{energy_logit_gradient, gradients, LossBreakdown, Objective};
pub use train::{compose_propagation, train, Adam, EpochRecord, TrainConfig, TrainHistory, TrainedModel, Trainer};

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::logsumexp;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, MetaPath};

/// Affine map `x · weight + bias` with `weight` shaped `in x out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform weights on `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-s..=s));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weight.nrows(), self.weight.ncols())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// One projection per feature meta-path, `feature_dim(end) x d_hidden`.
    pub projections: Vec<Linear>,
    /// `d_hidden·|paths| x d_hidden`.
    pub hidden: Linear,
    /// `d_hidden x K`.
    pub output: Linear,
}

impl EncoderParams {
    /// Draws projections, hidden layer and output layer in that order from `rng`.
    pub fn init(input_dims: &[usize], d_hidden: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if input_dims.is_empty() || d_hidden == 0 || n_classes == 0 {
            return Err(Error::InvalidConfig(
                "encoder needs at least one input path, d_hidden >= 1 and K >= 1".into(),
            ));
        }
        let projections = input_dims.iter().map(|&d| Linear::xavier(d, d_hidden, rng)).collect();
        let hidden = Linear::xavier(d_hidden * input_dims.len(), d_hidden, rng);
        let output = Linear::xavier(d_hidden, n_classes, rng);
        Ok(Self {
            projections,
            hidden,
            output,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            projections: self.projections.iter().map(Linear::zeros_like).collect(),
            hidden: self.hidden.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn d_hidden(&self) -> usize {
        self.hidden.weight.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.output.weight.ncols()
    }

    /// Named tensors in a fixed order: projections, hidden, output; weight before bias.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (p, lin) in self.projections.iter().enumerate() {
            out.push((
                format!("projection.{p}.weight"),
                lin.weight.shape().to_vec(),
                slice(&lin.weight),
            ));
            out.push((
                format!("projection.{p}.bias"),
                lin.bias.shape().to_vec(),
                slice1(&lin.bias),
            ));
        }
        for (name, lin) in [("hidden", &self.hidden), ("output", &self.output)] {
            out.push((
                format!("{name}.weight"),
                lin.weight.shape().to_vec(),
                slice(&lin.weight),
            ));
            out.push((format!("{name}.bias"), lin.bias.shape().to_vec(), slice1(&lin.bias)));
        }
        out
    }

    /// Mutable views of every tensor, in [`EncoderParams::named_tensors`] order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for lin in self.projections.iter_mut().chain([&mut self.hidden, &mut self.output]) {
            out.push(lin.weight.as_slice_mut().expect("standard layout"));
            out.push(lin.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.named_tensors().into_iter().map(|(_, _, t)| t).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Checks that shapes chain together for inputs of the given widths.
    pub fn check_shapes(&self, input_dims: &[usize]) -> Result<()> {
        let d = self.d_hidden();
        if self.projections.len() != input_dims.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} projections for {} feature paths",
                self.projections.len(),
                input_dims.len()
            )));
        }
        let layer_ok = |lin: &Linear, fan_in: usize, fan_out: usize| {
            lin.weight.dim() == (fan_in, fan_out) && lin.bias.len() == fan_out
        };
        for (p, (lin, &dim)) in self.projections.iter().zip(input_dims).enumerate() {
            if !layer_ok(lin, dim, d) {
                return Err(Error::ShapeMismatch(format!(
                    "projection {p} is {:?}, expected ({dim}, {d})",
                    lin.weight.dim()
                )));
            }
        }
        if !layer_ok(&self.hidden, d * input_dims.len(), d) {
            return Err(Error::ShapeMismatch("hidden layer shape".into()));
        }
        if !layer_ok(&self.output, d, self.n_classes()) || self.n_classes() == 0 {
            return Err(Error::ShapeMismatch("output layer shape".into()));
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

/// Precomputed meta-path feature matrices, one per encoder input.
#[derive(Clone, Debug)]
pub struct FeatureInputs {
    paths: Vec<MetaPath>,
    matrices: Vec<Array2<f64>>,
}

impl FeatureInputs {
    pub fn from_graph(graph: &HeteroGraph, paths: &[MetaPath]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one feature meta-path is required".into(),
            ));
        }
        let matrices = paths
            .iter()
            .map(|p| graph.metapath_features(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            paths: paths.to_vec(),
            matrices,
        })
    }

    pub fn from_matrices(matrices: Vec<Array2<f64>>) -> Result<Self> {
        let n = matrices.first().map(Array2::nrows).ok_or(Error::Empty)?;
        if matrices.iter().any(|m| m.nrows() != n) {
            return Err(Error::ShapeMismatch("feature matrices differ in row count".into()));
        }
        Ok(Self {
            paths: Vec::new(),
            matrices,
        })
    }

    pub fn paths(&self) -> &[MetaPath] {
        &self.paths
    }

    pub fn matrices(&self) -> &[Array2<f64>] {
        &self.matrices
    }

    pub fn n_nodes(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.matrices.iter().map(Array2::ncols).collect()
    }
}

/// Intermediate activations kept for back-propagation.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub concat: Array2<f64>,
    pub pre_hidden: Array2<f64>,
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

pub fn forward_inputs(inputs: &FeatureInputs, params: &EncoderParams) -> Result<ForwardPass> {
    params.check_shapes(&inputs.input_dims())?;
    let n = inputs.n_nodes();
    let d = params.d_hidden();
    let mut concat = Array2::zeros((n, d * inputs.matrices.len()));
    for (p, (x, lin)) in inputs.matrices.iter().zip(&params.projections).enumerate() {
        concat
            .slice_mut(ndarray::s![.., p * d..(p + 1) * d])
            .assign(&lin.forward(x));
    }
    let pre_hidden = params.hidden.forward(&concat);
    let hidden = pre_hidden.mapv(|v| v.max(0.0));
    let logits = params.output.forward(&hidden);
    Ok(ForwardPass {
        concat,
        pre_hidden,
        hidden,
        logits,
    })
}

/// Logits for every target node.
pub fn forward(graph: &HeteroGraph, feature_paths: &[MetaPath], params: &EncoderParams) -> Result<Array2<f64>> {
    let inputs = FeatureInputs::from_graph(graph, feature_paths)?;
    Ok(forward_inputs(&inputs, params)?.logits)
}

/// Row-wise softmax with max-shift.
pub fn softmax_probs(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|h| (h - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    probs
}

/// Row-wise argmax, ties to the lowest class.
pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (c, &v)| if v > best.1 { (c, v) } else { best },
                )
                .0
        })
        .collect()
}

/// Mean cross-entropy over `train_ids`; `labels` is indexed by node.
pub fn loss_classification(logits: &Array2<f64>, labels: &[usize], train_ids: &[usize]) -> Result<f64> {
    if train_ids.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let k = logits.ncols();
    let mut total = 0.0;
    for &i in train_ids {
        let y = labels[i];
        if y >= k {
            return Err(Error::LabelOutOfRange { label: y, classes: k });
        }
        let row = logits.row(i);
        total += logsumexp(row) - row[y];
    }
    Ok(total / train_ids.len() as f64)
}

/// Mean squared hinge `max(0, E_i - m_in)²` over `train_ids`.
pub fn loss_energy(final_energies: &[f64], train_ids: &[usize], m_in: f64) -> f64 {
    if train_ids.is_empty() {
        return 0.0;
    }
    let total: f64 = train_ids
        .iter()
        .map(|&i| {
            let r = (final_energies[i] - m_in).max(0.0);
            r * r
        })
        .sum();
    total / train_ids.len() as f64
}

pub fn loss_total(l_c: f64, l_e: f64, alpha: f64) -> f64 {
    alpha * l_c + (1.0 - alpha) * l_e
}

/// Maps dataset labels onto contiguous model classes, leaving out the OOD class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub id_classes: Vec<usize>,
    pub ood_class: usize,
}

impl LabelMap {
    pub fn new(labels: &[usize], ood_class: usize) -> Result<Self> {
        let present: BTreeSet<usize> = labels.iter().copied().collect();
        if !present.contains(&ood_class) {
            return Err(Error::OodClassMissing(ood_class));
        }
        let id_classes: Vec<usize> = present.into_iter().filter(|&c| c != ood_class).collect();
        if id_classes.is_empty() {
            return Err(Error::InvalidConfig("no in-distribution classes".into()));
        }
        Ok(Self { id_classes, ood_class })
    }

    /// Number of in-distribution classes `K`.
    pub fn k(&self) -> usize {
        self.id_classes.len()
    }

    /// Model class index for a dataset label; the OOD class maps to `K`.
    pub fn to_model(&self, label: usize) -> usize {
        if label == self.ood_class {
            return self.k();
        }
        self.id_classes.binary_search(&label).unwrap_or(self.k())
    }

    /// Dataset label for a K+1 bucket.
    pub fn to_dataset(&self, class: usize) -> usize {
        self.id_classes.get(class).copied().unwrap_or(self.ood_class)
    }

    pub fn map_all(&self, labels: &[usize]) -> Vec<usize> {
        labels.iter().map(|&l| self.to_model(l)).collect()
    }
}

/// Column sums, used for bias gradients.
pub(crate) fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}
