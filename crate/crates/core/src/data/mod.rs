//! Datasets: on-disk directory format, split construction and the synthetic generator.

mod io;
mod splits;
mod synth;

pub use io::{load_dataset, save_dataset, FeatureFormat};
pub use splits::{fisher_yates, make_splits, Splits, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC};
pub use synth::{aux_type_names, generate_synthetic, SynthConfig, TARGET_TYPE};

use crate::error::Result;
use crate::graph::{HeteroGraph, MetaPath};

pub const DEFAULT_MAX_HOPS: usize = 2;

/// Optional meta-path settings carried in `schema.json`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    /// Explicit propagation meta-paths; candidates up to `max_hops` when absent.
    pub metapaths: Option<Vec<MetaPath>>,
    /// Explicit encoder feature paths; defaults derived from `max_hops` when absent.
    pub feature_paths: Option<Vec<MetaPath>>,
    pub max_hops: usize,
}

impl Default for DatasetMeta {
    fn default() -> Self {
        Self {
            metapaths: None,
            feature_paths: None,
            max_hops: DEFAULT_MAX_HOPS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: HeteroGraph,
    /// Label of every target node.
    pub labels: Vec<usize>,
    pub splits: Option<Splits>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn propagation_paths(&self) -> Vec<MetaPath> {
        self.meta
            .metapaths
            .clone()
            .unwrap_or_else(|| self.graph.candidate_metapaths(self.meta.max_hops))
    }

    pub fn feature_paths(&self) -> Vec<MetaPath> {
        self.meta
            .feature_paths
            .clone()
            .unwrap_or_else(|| self.graph.default_feature_paths(self.meta.max_hops))
    }

    /// Stored splits, or fresh ones from [`make_splits`] with the default fractions.
    pub fn splits_or_make(&self, ood_class: usize, seed: u64) -> Result<Splits> {
        match &self.splits {
            Some(s) if s.ood_class == ood_class => Ok(s.clone()),
            _ => make_splits(&self.labels, ood_class, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC, seed),
        }
    }
}
