//! Energy scores, meta-path energy propagation, path fusion and the
//! threshold detector.
//!
//! Sign convention: `E_i` is stored as computed. Higher energy means more
//! OOD-like; the detector thresholds `-E_i`.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseRowMatrix;

/// Row sums of a propagation matrix must lie within this distance of 1.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

/// Per-node energies of the target type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EnergyVector(Vec<f64>);

impl EnergyVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("energy {v}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for EnergyVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EnergyVector> for Vec<f64> {
    fn from(e: EnergyVector) -> Self {
        e.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub gamma: f64,
    pub steps: usize,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// True when propagation leaves energies unchanged.
    pub fn is_identity(&self) -> bool {
        self.steps == 0 || self.gamma == 1.0
    }
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self { gamma: 0.5, steps: 2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub tau: f64,
}

/// Numerically stable `log Σ exp(row)`.
pub fn logsumexp(row: ArrayView1<'_, f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&h| (h - max).exp()).sum();
    max + sum.ln()
}

/// `E_i = -log Σ_c exp(h_i[c])` for every row of the logits.
pub fn energy_scores(logits: &Array2<f64>) -> Result<EnergyVector> {
    if logits.ncols() == 0 {
        return Err(Error::EmptyLogits);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    EnergyVector::new(logits.rows().into_iter().map(|r| -logsumexp(r)).collect())
}

/// Maximum class probability per row; higher means more in-distribution.
pub fn msp_score(probs: &Array2<f64>) -> Result<Vec<f64>> {
    probs
        .rows()
        .into_iter()
        .enumerate()
        .map(|(row, r)| {
            let sum: f64 = r.sum();
            if r.is_empty() || (sum - 1.0).abs() > 1e-9 || r.iter().any(|&p| p < 0.0) {
                return Err(Error::NotADistribution { row, sum });
            }
            Ok(r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

fn check_propagation_inputs(len: usize, a_hat: &SparseRowMatrix) -> Result<()> {
    if !a_hat.is_square() || a_hat.n_rows() != len {
        return Err(Error::ShapeMismatch(format!(
            "energy vector of length {len} against {}x{} adjacency",
            a_hat.n_rows(),
            a_hat.n_cols()
        )));
    }
    a_hat.check_row_stochastic(STOCHASTIC_TOLERANCE)
}

/// Applies `E <- γE + (1-γ)ÂE` exactly `config.steps` times.
pub fn propagate(e0: &EnergyVector, a_hat: &SparseRowMatrix, config: PropagationConfig) -> Result<EnergyVector> {
    config.validate()?;
    check_propagation_inputs(e0.len(), a_hat)?;
    propagate_checked(e0, a_hat, config)
}

fn propagate_checked(e0: &EnergyVector, a_hat: &SparseRowMatrix, config: PropagationConfig) -> Result<EnergyVector> {
    if config.is_identity() {
        return Ok(e0.clone());
    }
    let gamma = config.gamma;
    let mut e = e0.values().to_vec();
    for _ in 0..config.steps {
        let mixed = a_hat.mul_vec(&e)?;
        for (ei, mi) in e.iter_mut().zip(mixed) {
            *ei = gamma * *ei + (1.0 - gamma) * mi;
        }
    }
    EnergyVector::new(e)
}

/// Adjoint of [`propagate`]: applies `g <- γg + (1-γ)Âᵀg` `config.steps` times.
pub fn propagate_adjoint(g: &[f64], a_hat: &SparseRowMatrix, config: PropagationConfig) -> Result<Vec<f64>> {
    config.validate()?;
    check_propagation_inputs(g.len(), a_hat)?;
    let mut out = g.to_vec();
    if config.is_identity() {
        return Ok(out);
    }
    let gamma = config.gamma;
    for _ in 0..config.steps {
        let mixed = a_hat.transpose_mul_vec(&out)?;
        for (gi, mi) in out.iter_mut().zip(mixed) {
            *gi = gamma * *gi + (1.0 - gamma) * mi;
        }
    }
    Ok(out)
}

/// Elementwise mean over meta-paths.
pub fn fuse(per_path: &[EnergyVector]) -> Result<EnergyVector> {
    let first = per_path.first().ok_or(Error::EmptyPathSet)?;
    let n = first.len();
    let mut sum = vec![0.0; n];
    for e in per_path {
        if e.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: e.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(e.values()) {
            *s += v;
        }
    }
    let count = per_path.len() as f64;
    EnergyVector::new(sum.into_iter().map(|s| s / count).collect())
}

/// Propagates the same raw energies along every adjacency and averages the results.
///
/// An empty adjacency list means no propagation; the raw energies come back.
pub fn propagate_and_fuse(
    raw: &EnergyVector,
    adjacencies: &[&SparseRowMatrix],
    config: PropagationConfig,
) -> Result<EnergyVector> {
    if adjacencies.is_empty() {
        return Ok(raw.clone());
    }
    let per_path = adjacencies
        .iter()
        .map(|a| propagate(raw, a, config))
        .collect::<Result<Vec<_>>>()?;
    fuse(&per_path)
}

/// Flags node `i` as OOD iff `-E_i <= τ`.
pub fn detect(energies: &EnergyVector, config: DetectorConfig) -> Vec<bool> {
    energies.values().iter().map(|&e| -e <= config.tau).collect()
}

/// Propagation adjacencies validated once and reused, as when the same
/// meta-paths score many energy vectors.
#[derive(Clone, Debug)]
pub struct Propagator {
    adjacencies: Vec<Arc<SparseRowMatrix>>,
    config: PropagationConfig,
}

impl Propagator {
    pub fn new(adjacencies: Vec<Arc<SparseRowMatrix>>, config: PropagationConfig) -> Result<Self> {
        config.validate()?;
        if let Some(first) = adjacencies.first() {
            for a in &adjacencies {
                check_propagation_inputs(first.n_rows(), a)?;
            }
        }
        Ok(Self { adjacencies, config })
    }

    pub fn adjacencies(&self) -> &[Arc<SparseRowMatrix>] {
        &self.adjacencies
    }

    pub fn config(&self) -> PropagationConfig {
        self.config
    }

    /// Same result as [`propagate_and_fuse`] without re-checking the adjacencies.
    pub fn run(&self, raw: &EnergyVector) -> Result<EnergyVector> {
        let Some(first) = self.adjacencies.first() else {
            return Ok(raw.clone());
        };
        if first.n_rows() != raw.len() {
            return Err(Error::ShapeMismatch(format!(
                "energy vector of length {} against {}x{} adjacency",
                raw.len(),
                first.n_rows(),
                first.n_cols()
            )));
        }
        let per_path = self
            .adjacencies
            .iter()
            .map(|a| propagate_checked(raw, a, self.config))
            .collect::<Result<Vec<_>>>()?;
        fuse(&per_path)
    }
}
