#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use oodhg::energy::PropagationConfig;
use oodhg::graph::{EdgeTypeSchema, GraphSchema, HeteroGraph, MetaPath, NodeTypeSchema};
use oodhg::model::{gradients, EncoderParams, FeatureInputs, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn path(types: &[&str]) -> MetaPath {
    MetaPath::new(types.iter().copied()).unwrap()
}

/// Three node types T (target), A, B with edge types TT, TA, AT, TB, BT, AB.
///
/// Densities are drawn per edge type, so some rows are empty and some hops
/// are rectangular. Every type carries features.
pub fn random_graph(seed: u64, max_nodes: usize) -> HeteroGraph {
    let mut r = rng(seed);
    let counts: BTreeMap<&str, usize> = ["T", "A", "B"]
        .into_iter()
        .map(|t| (t, r.random_range(1..=max_nodes)))
        .collect();
    let dims = [("T", 3), ("A", 2), ("B", 2)];
    let node_types = dims
        .iter()
        .map(|&(name, d)| NodeTypeSchema {
            name: name.into(),
            count: counts[name],
            feature_dim: d,
        })
        .collect();
    let pairs = [("T", "T"), ("T", "A"), ("A", "T"), ("T", "B"), ("B", "T"), ("A", "B")];
    let edge_types = pairs
        .iter()
        .map(|&(s, d)| EdgeTypeSchema {
            name: format!("{s}{d}"),
            src_type: s.into(),
            dst_type: d.into(),
        })
        .collect();
    let mut edges = BTreeMap::new();
    for &(s, d) in &pairs {
        let density: f64 = r.random_range(0.0..0.4);
        let mut list = Vec::new();
        for i in 0..counts[s] {
            for j in 0..counts[d] {
                if r.random::<f64>() < density {
                    list.push((i, j));
                }
            }
        }
        edges.insert(format!("{s}{d}"), list);
    }
    let features = dims
        .iter()
        .map(|&(name, d)| {
            let m = Array2::from_shape_fn((counts[name], d), |_| r.random_range(-1.0..1.0));
            (name.to_string(), m)
        })
        .collect();
    let schema = GraphSchema {
        node_types,
        edge_types,
        target_type: "T".into(),
    };
    HeteroGraph::build(schema, edges, features).unwrap()
}

/// Target-to-target paths of the random graph, 1 to 4 hops.
pub fn target_paths() -> Vec<MetaPath> {
    vec![
        path(&["T", "T"]),
        path(&["T", "A", "T"]),
        path(&["T", "B", "T"]),
        path(&["T", "A", "B", "T"]),
        path(&["T", "T", "A", "T"]),
        path(&["T", "A", "T", "B", "T"]),
    ]
}

pub fn dense_adjacency(graph: &HeteroGraph, edge_type: &str) -> Array2<f64> {
    let et = graph.schema().edge_types.iter().find(|e| e.name == edge_type).unwrap();
    let n = graph.schema().node_count(&et.src_type).unwrap();
    let m = graph.schema().node_count(&et.dst_type).unwrap();
    let mut a = Array2::zeros((n, m));
    for &(s, d) in graph.edges(edge_type).unwrap() {
        a[[s, d]] = 1.0;
    }
    a
}

pub fn dense_row_normalize(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let s: f64 = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        }
    }
    out
}

/// Dense meta-path composition: product of row-normalized hops; a same-type
/// product gets each row's shortfall from 1 added to its diagonal.
pub fn dense_compose(graph: &HeteroGraph, p: &MetaPath) -> Array2<f64> {
    let types = p.types();
    let mut product: Option<Array2<f64>> = None;
    for w in types.windows(2) {
        let name = format!("{}{}", w[0], w[1]);
        let hop = dense_row_normalize(&dense_adjacency(graph, &name));
        product = Some(match product {
            None => hop,
            Some(acc) => acc.dot(&hop),
        });
    }
    let mut product = product.unwrap();
    if p.start() == p.end() {
        for i in 0..product.nrows() {
            let deficit = 1.0 - product.row(i).sum();
            if deficit > 1e-12 {
                product[[i, i]] += deficit;
            }
        }
    }
    product
}

/// `(γI + (1-γ)Â)^k e0` with explicit dense matrix powers.
pub fn dense_propagate(a_hat: &Array2<f64>, e0: &[f64], gamma: f64, steps: usize) -> Vec<f64> {
    let n = a_hat.nrows();
    let m = Array2::<f64>::eye(n) * gamma + a_hat * (1.0 - gamma);
    let mut power = Array2::<f64>::eye(n);
    for _ in 0..steps {
        power = power.dot(&m);
    }
    power.dot(&ndarray::Array1::from_vec(e0.to_vec())).to_vec()
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

/// Precision at each positive, ranking ties by ascending index.
pub fn brute_aupr(scores: &[f64], labels: &[bool]) -> f64 {
    let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j <= i);
    let p = labels.iter().filter(|&&l| l).count() as f64;
    let mut sum = 0.0;
    for i in (0..scores.len()).filter(|&i| labels[i]) {
        let above: Vec<usize> = (0..scores.len()).filter(|&j| ahead(i, j)).collect();
        let hits = above.iter().filter(|&&j| labels[j]).count() as f64;
        sum += hits / above.len() as f64;
    }
    sum / p
}

/// Minimum FPR over thresholds `s >= t`, t in the distinct scores plus +inf, with TPR >= 0.95.
pub fn brute_fpr95(scores: &[f64], labels: &[bool]) -> f64 {
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds
        .iter()
        .filter_map(|&t| {
            let tp = (0..scores.len()).filter(|&i| labels[i] && scores[i] >= t).count();
            let fp = (0..scores.len()).filter(|&i| !labels[i] && scores[i] >= t).count();
            (tp as f64 / p as f64 >= 0.95).then_some(fp as f64 / n as f64)
        })
        .fold(f64::INFINITY, f64::min)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_FLOOR: f64 = 1e-7;

pub struct Case {
    pub graph: oodhg::graph::HeteroGraph,
    pub params: EncoderParams,
    pub labels: Vec<usize>,
    pub train_ids: Vec<usize>,
    pub alpha: f64,
    pub m_in: f64,
    pub propagation: PropagationConfig,
}

pub fn case(seed: u64) -> Case {
    let graph = random_graph(seed, 15);
    let mut r = rng(seed.wrapping_add(1000));
    let n = graph.target_count();
    let k = 3;
    let dims = vec![3, 2, 3, 2];
    let params = EncoderParams::init(&dims, r.random_range(2..7), k, &mut r).unwrap();
    let labels = (0..n).map(|_| r.random_range(0..k)).collect();
    let mut train_ids: Vec<usize> = (0..n).filter(|_| r.random::<f64>() < 0.6).collect();
    if train_ids.is_empty() {
        train_ids.push(0);
    }
    Case {
        graph,
        params,
        labels,
        train_ids,
        alpha: r.random_range(0.0..=1.0),
        // around the initial energy scale, so some hinges are active and some are not
        m_in: r.random_range(-2.0..-0.5),
        propagation: PropagationConfig {
            gamma: r.random_range(0.05..=1.0),
            steps: r.random_range(0..5),
        },
    }
}

pub fn feature_paths() -> Vec<oodhg::graph::MetaPath> {
    vec![
        path(&["T"]),
        path(&["T", "A"]),
        path(&["T", "A", "T"]),
        path(&["T", "B", "T", "B"]),
    ]
}

pub fn prop_paths() -> Vec<oodhg::graph::MetaPath> {
    vec![path(&["T", "A", "T"]), path(&["T", "T"]), path(&["T", "A", "B", "T"])]
}

/// Returns the number of partials checked and whether the hinge term was active.
pub fn gradient_check(seed: u64) -> (usize, bool) {
    let c = case(seed);
    let fp = feature_paths();
    let pp = prop_paths();
    let inputs = FeatureInputs::from_graph(&c.graph, &fp).unwrap();
    let adjacencies = pp.iter().map(|p| c.graph.compose_metapath(p).unwrap()).collect();
    let objective = Objective {
        inputs: &inputs,
        adjacencies,
        labels: &c.labels,
        train_ids: &c.train_ids,
        alpha: c.alpha,
        m_in: c.m_in,
        propagation: c.propagation,
    };
    let (_, analytic) = gradients(
        &c.graph,
        &fp,
        &pp,
        &c.params,
        &c.labels,
        &c.train_ids,
        c.alpha,
        c.m_in,
        c.propagation,
    )
    .unwrap();

    let analytic: Vec<f64> = analytic.tensors().concat();
    let mut params = c.params.clone();
    let mut checked = 0;
    let mut flat = 0;
    let n_tensors = params.tensors().len();
    for t in 0..n_tensors {
        let len = params.tensors()[t].len();
        for j in 0..len {
            let original = params.tensors()[t][j];
            params.tensors_mut()[t][j] = original + FD_STEP;
            let up = objective.evaluate(&params).unwrap().total;
            params.tensors_mut()[t][j] = original - FD_STEP;
            let down = objective.evaluate(&params).unwrap().total;
            params.tensors_mut()[t][j] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[flat];
            let err = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            assert!(
                err <= FD_ABS_FLOOR || err <= FD_REL_TOL * scale,
                "seed {seed} tensor {t} entry {j}: analytic {a} numeric {numeric}"
            );
            checked += 1;
            flat += 1;
        }
    }
    let active = c.alpha < 1.0 && objective.evaluate(&params).unwrap().energy > 0.0;
    (checked, active)
}
