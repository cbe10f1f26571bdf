//! Analytic gradients of `α·L_C + (1-α)·L_E`.
//!
//! Propagation is linear in the raw energies: `E_final = M · E_raw` with
//! `M = mean_P (γI + (1-γ)Â_P)^k`. The hinge gradient `g` on the final
//! energies therefore pulls back as `Mᵀ g`, and `∂E_raw_i / ∂h_i = -softmax(h_i)`.

use std::sync::Arc;

use ndarray::{s, Array2};

use super::{
    column_sums, forward_inputs, loss_classification, loss_energy, loss_total, softmax_probs, EncoderParams,
    FeatureInputs, ForwardPass,
};
use crate::energy::{energy_scores, propagate_adjoint, propagate_and_fuse, EnergyVector, PropagationConfig};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, MetaPath};
use crate::sparse::SparseRowMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub classification: f64,
    pub energy: f64,
}

/// Everything needed to evaluate the training loss for a parameter vector.
#[derive(Clone, Debug)]
pub struct Objective<'a> {
    pub inputs: &'a FeatureInputs,
    pub adjacencies: Vec<Arc<SparseRowMatrix>>,
    /// Model class per node; only entries at `train_ids` are read.
    pub labels: &'a [usize],
    pub train_ids: &'a [usize],
    pub alpha: f64,
    pub m_in: f64,
    pub propagation: PropagationConfig,
}

/// Forward state shared by loss evaluation and back-propagation.
pub(crate) struct Evaluated {
    pub pass: ForwardPass,
    pub raw: EnergyVector,
    pub fused: EnergyVector,
    pub loss: LossBreakdown,
}

impl Objective<'_> {
    fn adjacency_refs(&self) -> Vec<&SparseRowMatrix> {
        self.adjacencies.iter().map(|a| a.as_ref()).collect()
    }

    pub(crate) fn evaluate_full(&self, params: &EncoderParams) -> Result<Evaluated> {
        let pass = forward_inputs(self.inputs, params)?;
        let raw = energy_scores(&pass.logits)?;
        let fused = propagate_and_fuse(&raw, &self.adjacency_refs(), self.propagation)?;
        let classification = loss_classification(&pass.logits, self.labels, self.train_ids)?;
        let energy = loss_energy(fused.values(), self.train_ids, self.m_in);
        let loss = LossBreakdown {
            total: loss_total(classification, energy, self.alpha),
            classification,
            energy,
        };
        Ok(Evaluated { pass, raw, fused, loss })
    }

    pub fn evaluate(&self, params: &EncoderParams) -> Result<LossBreakdown> {
        Ok(self.evaluate_full(params)?.loss)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn gradients(&self, params: &EncoderParams) -> Result<(LossBreakdown, EncoderParams)> {
        let ev = self.evaluate_full(params)?;
        let probs = softmax_probs(&ev.pass.logits);
        let n_train = self.train_ids.len() as f64;

        let mut dlogits = Array2::<f64>::zeros(ev.pass.logits.raw_dim());
        if self.alpha != 0.0 {
            let scale = self.alpha / n_train;
            for &i in self.train_ids {
                let mut row = dlogits.row_mut(i);
                row.scaled_add(scale, &probs.row(i));
                row[self.labels[i]] -= scale;
            }
        }
        if self.alpha != 1.0 {
            let de = energy_logit_gradient(
                &probs,
                ev.fused.values(),
                &self.adjacency_refs(),
                self.propagation,
                self.train_ids,
                self.m_in,
            )?;
            dlogits.scaled_add(1.0 - self.alpha, &de);
        }

        Ok((ev.loss, backprop(self.inputs, params, &ev.pass, &dlogits)))
    }
}

/// Gradient of the hinge energy loss with respect to the logits.
///
/// `fused` holds the post-propagation energies; the result is zero wherever the
/// hinge is inactive on every training node.
pub fn energy_logit_gradient(
    probs: &Array2<f64>,
    fused: &[f64],
    adjacencies: &[&SparseRowMatrix],
    propagation: PropagationConfig,
    train_ids: &[usize],
    m_in: f64,
) -> Result<Array2<f64>> {
    let n = probs.nrows();
    if fused.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: fused.len(),
        });
    }
    let n_train = train_ids.len() as f64;
    let mut g = vec![0.0; n];
    for &i in train_ids {
        g[i] = 2.0 * (fused[i] - m_in).max(0.0) / n_train;
    }
    let pulled = if adjacencies.is_empty() {
        g
    } else {
        let mut acc = vec![0.0; n];
        for a in adjacencies {
            for (s, v) in acc.iter_mut().zip(propagate_adjoint(&g, a, propagation)?) {
                *s += v;
            }
        }
        let count = adjacencies.len() as f64;
        acc.into_iter().map(|s| s / count).collect()
    };
    let mut out = probs.clone();
    for (mut row, d) in out.rows_mut().into_iter().zip(pulled) {
        row *= -d;
    }
    Ok(out)
}

fn backprop(
    inputs: &FeatureInputs,
    params: &EncoderParams,
    pass: &ForwardPass,
    dlogits: &Array2<f64>,
) -> EncoderParams {
    let mut grads = params.zeros_like();
    grads.output.weight = pass.hidden.t().dot(dlogits);
    grads.output.bias = column_sums(dlogits);

    let mut dpre = dlogits.dot(&params.output.weight.t());
    dpre.zip_mut_with(&pass.pre_hidden, |d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
    grads.hidden.weight = pass.concat.t().dot(&dpre);
    grads.hidden.bias = column_sums(&dpre);

    let dconcat = dpre.dot(&params.hidden.weight.t());
    let d = params.d_hidden();
    for (p, (x, g)) in inputs.matrices().iter().zip(&mut grads.projections).enumerate() {
        let dproj = dconcat.slice(s![.., p * d..(p + 1) * d]);
        g.weight = x.t().dot(&dproj);
        g.bias = dproj.sum_axis(ndarray::Axis(0));
    }
    grads
}

/// Gradient of the joint loss for a graph, resolving and composing meta-paths first.
#[allow(clippy::too_many_arguments)]
pub fn gradients(
    graph: &HeteroGraph,
    feature_paths: &[MetaPath],
    prop_paths: &[MetaPath],
    params: &EncoderParams,
    labels: &[usize],
    train_ids: &[usize],
    alpha: f64,
    m_in: f64,
    propagation: PropagationConfig,
) -> Result<(LossBreakdown, EncoderParams)> {
    let inputs = FeatureInputs::from_graph(graph, feature_paths)?;
    let adjacencies = prop_paths
        .iter()
        .map(|p| graph.compose_metapath(p))
        .collect::<Result<Vec<_>>>()?;
    Objective {
        inputs: &inputs,
        adjacencies,
        labels,
        train_ids,
        alpha,
        m_in,
        propagation,
    }
    .gradients(params)
}
