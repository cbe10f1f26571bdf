//! Wall-time of meta-path composition (cold) against propagation over cached
//! adjacencies (warm), for a range of step counts.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyVector, PropagationConfig, Propagator};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, MetaPath};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub steps: Vec<usize>,
    pub gamma: f64,
    /// Timings are the median over this many runs.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            steps: vec![1, 2, 4, 8],
            gamma: 0.5,
            repeats: 7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub steps: usize,
    /// Compose every path on an empty cache, then propagate.
    pub cold_seconds: f64,
    /// Propagate over already composed adjacencies.
    pub warm_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_target: usize,
    pub paths: Vec<MetaPath>,
    pub nnz: Vec<usize>,
    pub compose_seconds: f64,
    pub timings: Vec<StepTiming>,
    /// Warm time at the largest step count over warm time at the smallest.
    pub warm_ratio: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

pub fn bench_propagation(graph: &HeteroGraph, paths: &[MetaPath], config: &BenchConfig) -> Result<BenchReport> {
    if paths.is_empty() {
        return Err(Error::EmptyPathSet);
    }
    if config.steps.is_empty() || config.repeats == 0 {
        return Err(Error::InvalidConfig(
            "bench needs at least one step count and one repeat".into(),
        ));
    }
    let n = graph.target_count();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let energies = EnergyVector::new((0..n).map(|_| rng.random_range(-10.0..0.0)).collect())?;

    let compose = |g: &HeteroGraph| paths.iter().map(|p| g.compose_metapath(p)).collect::<Result<Vec<_>>>();
    let mut compose_times = Vec::with_capacity(config.repeats);
    for _ in 0..config.repeats {
        let fresh = graph.clone();
        compose_times.push(timed(|| compose(&fresh))?.1);
    }
    let adjacencies = compose(graph)?;

    let mut timings = Vec::with_capacity(config.steps.len());
    for &steps in &config.steps {
        let prop = PropagationConfig {
            gamma: config.gamma,
            steps,
        };
        let warm_propagator = Propagator::new(adjacencies.clone(), prop)?;
        let mut cold = Vec::with_capacity(config.repeats);
        let mut warm = Vec::with_capacity(config.repeats);
        for _ in 0..config.repeats {
            let fresh = graph.clone();
            cold.push(timed(|| Propagator::new(compose(&fresh)?, prop)?.run(&energies))?.1);
            warm.push(timed(|| warm_propagator.run(&energies))?.1);
        }
        timings.push(StepTiming {
            steps,
            cold_seconds: median(cold),
            warm_seconds: median(warm),
        });
    }

    let by_steps = |pick: fn(usize, usize) -> bool| {
        timings
            .iter()
            .reduce(|a, b| if pick(b.steps, a.steps) { b } else { a })
            .map(|t| t.warm_seconds)
            .unwrap_or(f64::NAN)
    };
    let warm_ratio = by_steps(|a, b| a > b) / by_steps(|a, b| a < b);
    Ok(BenchReport {
        n_target: n,
        paths: paths.to_vec(),
        nnz: adjacencies.iter().map(|a| a.nnz()).collect(),
        compose_seconds: median(compose_times),
        timings,
        warm_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
