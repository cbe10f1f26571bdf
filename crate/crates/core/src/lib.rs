//! Energy-based out-of-distribution node detection on heterogeneous graphs.
//!
//! A meta-path encoder produces class logits for the target node type. Each
//! node's energy `-logsumexp(logits)` is smoothed along target-to-target
//! meta-paths, averaged over paths, and thresholded to flag OOD nodes. Training
//! combines cross-entropy with a squared hinge on the propagated energies.
//!
//! Modules:
//! - [`sparse`] CSR matrices and the sparse products behind meta-path composition
//! - [`graph`] typed heterogeneous graphs and meta-paths
//! - [`energy`] energy scores, propagation, fusion, detection
//! - [`model`] encoder, losses, analytic gradients, Adam training
//! - [`metrics`] AUROC, AUPR, FPR@95, micro/macro F1, threshold sweeps
//! - [`data`] dataset directories, splits, synthetic generator
//! - [`checkpoint`] parameter files
//! - [`pipeline`] train-and-evaluate runs and ablation arms
//! - [`bench`] composition and propagation timings

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod energy;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sparse;

pub use error::{Error, Result};
