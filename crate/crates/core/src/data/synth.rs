//! Synthetic heterogeneous graphs with a planted OOD class.
//!
//! The target type `T` holds `K + 1` blocks of `nodes_per_class` nodes;
//! block `K` is the OOD class. Each auxiliary type (`A`, `B`, …) is split into
//! `K + 1` communities and target nodes attach to their own class's community
//! with `intra_edge_prob` and to any other community with `inter_edge_prob`.
//!
//! In-distribution class `c` has feature mean `class_separation · e_c`. Each
//! OOD node borrows a uniformly drawn ID class `c'` and is shifted toward the
//! origin: mean `(class_separation - ood_shift) · e_c'`. With `ood_shift = 0`
//! the OOD features are distributed exactly like the ID mixture.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::graph::{EdgeTypeSchema, GraphSchema, HeteroGraph, NodeTypeSchema};

pub const TARGET_TYPE: &str = "T";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_id_classes: usize,
    pub nodes_per_class: usize,
    pub n_aux_types: usize,
    pub aux_per_community: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub ood_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_id_classes: 3,
            nodes_per_class: 150,
            n_aux_types: 2,
            aux_per_community: 10,
            feature_dim: 8,
            class_separation: 2.0,
            intra_edge_prob: 0.3,
            inter_edge_prob: 0.02,
            ood_shift: 2.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_id_classes < 2 {
            return bad(format!("need at least 2 ID classes, got {}", self.n_id_classes));
        }
        if self.nodes_per_class == 0 || self.aux_per_community == 0 {
            return bad("nodes_per_class and aux_per_community must be positive".into());
        }
        if self.feature_dim < self.n_id_classes {
            return bad(format!(
                "feature_dim {} must be at least the number of ID classes {}",
                self.feature_dim, self.n_id_classes
            ));
        }
        if self.n_aux_types > 25 {
            return bad("at most 25 auxiliary types".into());
        }
        for p in [self.intra_edge_prob, self.inter_edge_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if !(self.ood_shift >= 0.0) || !self.class_separation.is_finite() {
            return bad("ood_shift must be non-negative and class_separation finite".into());
        }
        Ok(())
    }

    /// Label of the planted OOD class.
    pub fn ood_class(&self) -> usize {
        self.n_id_classes
    }
}

/// Single-letter auxiliary type names, skipping the target's `T`.
pub fn aux_type_names(n: usize) -> Vec<String> {
    ('A'..='Z')
        .filter(|&c| c.to_string() != TARGET_TYPE)
        .take(n)
        .map(String::from)
        .collect()
}

/// Draws a graph and its target labels; identical seeds give identical output.
///
/// Features are rounded to `f32` precision so the raw-f32 file format stores them exactly.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.n_id_classes;
    let n_target = (k + 1) * cfg.nodes_per_class;
    let labels: Vec<usize> = (0..n_target).map(|i| i / cfg.nodes_per_class).collect();

    let mut features = Array2::<f64>::zeros((n_target, cfg.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        let (direction, magnitude) = if labels[i] < k {
            (labels[i], cfg.class_separation)
        } else {
            (rng.random_range(0..k), cfg.class_separation - cfg.ood_shift)
        };
        for (d, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            let mean = if d == direction { magnitude } else { 0.0 };
            *v = (mean + noise) as f32 as f64;
        }
    }

    let aux_names = aux_type_names(cfg.n_aux_types);
    let n_aux = (k + 1) * cfg.aux_per_community;
    let mut node_types = vec![NodeTypeSchema {
        name: TARGET_TYPE.into(),
        count: n_target,
        feature_dim: cfg.feature_dim,
    }];
    let mut edge_types = Vec::new();
    let mut edges = BTreeMap::new();
    for name in &aux_names {
        node_types.push(NodeTypeSchema {
            name: name.clone(),
            count: n_aux,
            feature_dim: 0,
        });
        let forward = format!("{TARGET_TYPE}{name}");
        let backward = format!("{name}{TARGET_TYPE}");
        edge_types.push(EdgeTypeSchema {
            name: forward.clone(),
            src_type: TARGET_TYPE.into(),
            dst_type: name.clone(),
        });
        edge_types.push(EdgeTypeSchema {
            name: backward.clone(),
            src_type: name.clone(),
            dst_type: TARGET_TYPE.into(),
        });
        let mut pairs = Vec::new();
        for (i, &label) in labels.iter().enumerate() {
            for u in 0..n_aux {
                let p = if u / cfg.aux_per_community == label {
                    cfg.intra_edge_prob
                } else {
                    cfg.inter_edge_prob
                };
                if rng.random::<f64>() < p {
                    pairs.push((i, u));
                }
            }
        }
        let mut reversed: Vec<(usize, usize)> = pairs.iter().map(|&(i, u)| (u, i)).collect();
        reversed.sort_unstable();
        edges.insert(forward, pairs);
        edges.insert(backward, reversed);
    }

    let schema = GraphSchema {
        node_types,
        edge_types,
        target_type: TARGET_TYPE.into(),
    };
    let graph = HeteroGraph::build(schema, edges, BTreeMap::from([(TARGET_TYPE.to_string(), features)]))?;
    Ok(Dataset {
        graph,
        labels,
        splits: None,
        meta: DatasetMeta::default(),
    })
}
