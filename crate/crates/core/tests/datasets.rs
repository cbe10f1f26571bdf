mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use common::path;
use ndarray::{array, Array2};
use oodhg::data::{
    generate_synthetic, load_dataset, make_splits, save_dataset, FeatureFormat, SynthConfig, DEFAULT_TRAIN_FRAC,
    DEFAULT_VAL_FRAC,
};
use oodhg::graph::{EdgeTypeSchema, GraphSchema, HeteroGraph, MetaPath, NodeTypeSchema};
use oodhg::Error;
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        nodes_per_class: 12,
        aux_per_community: 3,
        feature_dim: 4,
        seed,
        ..SynthConfig::default()
    }
}

fn schema(nodes: &[(&str, usize, usize)], edges: &[(&str, &str)], target: &str) -> GraphSchema {
    GraphSchema {
        node_types: nodes
            .iter()
            .map(|&(name, count, feature_dim)| NodeTypeSchema {
                name: name.into(),
                count,
                feature_dim,
            })
            .collect(),
        edge_types: edges
            .iter()
            .map(|&(s, d)| EdgeTypeSchema {
                name: format!("{s}{d}"),
                src_type: s.into(),
                dst_type: d.into(),
            })
            .collect(),
        target_type: target.into(),
    }
}

fn edgeless(schema: GraphSchema) -> HeteroGraph {
    HeteroGraph::build(schema, BTreeMap::new(), BTreeMap::new()).unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn minimal_fixture_loads() {
    let ds = load_dataset(fixture("minimal")).unwrap();
    assert_eq!(ds.graph.schema().total_nodes(), 5);
    assert_eq!(ds.graph.target_count(), 3);
    assert_eq!(ds.labels, vec![0, 0, 1]);
    assert!(ds.splits.is_none());
    assert_eq!(ds.propagation_paths(), vec![path(&["P", "A", "P"])]);
    let x = ds.graph.features("P").unwrap();
    assert_eq!(x, &array![[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]);
}

#[test]
fn undeclared_edge_file_is_a_validation_error() {
    match load_dataset(fixture("unknown_edge_type")) {
        Err(Error::Validation { file, message }) => {
            assert!(file.ends_with("edges/PX.tsv"), "{file:?}");
            assert!(message.contains("PX"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_edge_line_reports_file_and_line() {
    match load_dataset(fixture("bad_edge_line")) {
        Err(e @ Error::Parse { .. }) => {
            let text = e.to_string();
            assert!(text.contains("PA.tsv"), "{text}");
            assert!(text.contains(":2"), "{text}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_directory_is_missing_file() {
    assert!(matches!(
        load_dataset(fixture("does_not_exist")),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn raw_f32_round_trip_is_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ds = generate_synthetic(&small_synth(3)).unwrap();
    ds.splits = Some(make_splits(&ds.labels, 3, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC, 9).unwrap());
    save_dataset(&ds, tmp.path(), FeatureFormat::F32).unwrap();
    let back = load_dataset(tmp.path()).unwrap();
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.splits, ds.splits);
    assert_eq!(back.graph.schema(), ds.graph.schema());
    for et in &ds.graph.schema().edge_types {
        assert_eq!(back.graph.edges(&et.name).unwrap(), ds.graph.edges(&et.name).unwrap());
    }
    let (a, b) = (ds.graph.features("T").unwrap(), back.graph.features("T").unwrap());
    assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn csv_round_trip_is_exact_and_saving_is_deterministic() {
    let ds = generate_synthetic(&small_synth(4)).unwrap();
    let (t1, t2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    save_dataset(&ds, t1.path(), FeatureFormat::Csv).unwrap();
    save_dataset(
        &generate_synthetic(&small_synth(4)).unwrap(),
        t2.path(),
        FeatureFormat::Csv,
    )
    .unwrap();
    assert_eq!(dir_contents(t1.path()), dir_contents(t2.path()));
    let back = load_dataset(t1.path()).unwrap();
    assert_eq!(back.graph.features("T").unwrap(), ds.graph.features("T").unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_splits_partition_targets(seed in any::<u64>(), split_seed in any::<u64>()) {
        let ds = generate_synthetic(&small_synth(seed)).unwrap();
        let s = make_splits(&ds.labels, 3, DEFAULT_TRAIN_FRAC, DEFAULT_VAL_FRAC, split_seed).unwrap();
        s.validate(&ds.labels).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..ds.labels.len()).collect::<Vec<_>>());
        for part in [&s.train, &s.val, &s.test] {
            prop_assert!(part.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert!(s.train.iter().chain(&s.val).all(|&i| ds.labels[i] != 3));
    }
}

#[test]
fn dblp_shaped_schema() {
    let s = schema(
        &[("A", 4057, 334), ("P", 14328, 4231), ("T", 7723, 50), ("V", 20, 0)],
        &[("A", "P"), ("P", "A"), ("T", "P"), ("P", "T"), ("V", "P"), ("P", "V")],
        "A",
    );
    s.validate().unwrap();
    let features = [("A", 4057, 334), ("P", 14328, 4231), ("T", 7723, 50)]
        .into_iter()
        .map(|(n, c, d)| (n.to_string(), Array2::zeros((c, d))))
        .collect();
    let g = HeteroGraph::build(s, BTreeMap::new(), features).unwrap();
    assert_eq!(g.candidate_metapaths(2), vec![path(&["A", "P", "A"])]);
}

#[test]
fn acm_shaped_schema_covers_listed_paths() {
    // C stands for the subject type; PP is the citation relation.
    let g = edgeless(schema(
        &[("P", 30, 0), ("A", 20, 0), ("C", 5, 0)],
        &[("P", "A"), ("A", "P"), ("P", "C"), ("C", "P"), ("P", "P")],
        "P",
    ));
    let listed = [
        "PP", "PAP", "PCP", "PAPP", "PCPP", "PPAP", "PPCP", "PAPAP", "PAPCP", "PCPAP", "PCPCP",
    ];
    for max_hops in [4, 5] {
        let candidates = g.candidate_metapaths(max_hops);
        for p in listed {
            let mp = MetaPath::parse(p, g.schema()).unwrap();
            assert!(candidates.contains(&mp), "{p} missing at max_hops {max_hops}");
        }
        assert!(candidates
            .iter()
            .all(|c| c.start() == "P" && c.end() == "P" && c.hops() <= max_hops));
        let mut sorted = candidates.clone();
        sorted.sort();
        assert_eq!(sorted, candidates);
        assert_eq!(g.candidate_metapaths(max_hops), candidates);
    }
}

#[test]
fn hand_computed_compositions() {
    let g = HeteroGraph::build(
        schema(&[("A", 2, 0), ("P", 1, 0)], &[("A", "P"), ("P", "A")], "A"),
        BTreeMap::from([
            ("AP".to_string(), vec![(0, 0), (1, 0)]),
            ("PA".to_string(), vec![(0, 0), (0, 1)]),
        ]),
        BTreeMap::new(),
    )
    .unwrap();
    let a = g.compose_metapath(&path(&["A", "P", "A"])).unwrap();
    assert_eq!(a.to_dense(), array![[0.5, 0.5], [0.5, 0.5]]);

    let g = HeteroGraph::build(
        schema(&[("A", 2, 0), ("P", 2, 2)], &[("A", "P")], "A"),
        BTreeMap::from([("AP".to_string(), vec![(0, 0), (0, 1), (1, 1)])]),
        BTreeMap::from([("P".to_string(), array![[1.0, 0.0], [0.0, 1.0]])]),
    )
    .unwrap();
    let x = g.metapath_features(&path(&["A", "P"])).unwrap();
    assert_eq!(x, array![[0.5, 0.5], [0.0, 1.0]]);
}

/// Fraction of ordered target pairs (i != j) sharing an aux neighbor whose labels match.
fn homophily(graph: &HeteroGraph, labels: &[usize]) -> f64 {
    let (mut same, mut total) = (0u64, 0u64);
    for et in graph.schema().edge_types.iter().filter(|e| e.src_type != "T") {
        let n_aux = graph.schema().node_count(&et.src_type).unwrap();
        let mut members = vec![Vec::new(); n_aux];
        for &(u, t) in graph.edges(&et.name).unwrap() {
            members[u].push(t);
        }
        for m in &members {
            for &i in m {
                for &j in m {
                    if i != j {
                        total += 1;
                        same += (labels[i] == labels[j]) as u64;
                    }
                }
            }
        }
    }
    same as f64 / total as f64
}

#[test]
fn default_generator_is_homophilous() {
    let cfg = SynthConfig::default();
    let ds = generate_synthetic(&cfg).unwrap();
    let classes = cfg.n_id_classes + 1;
    // pairs drawn without structure match with probability sum_c (n_c / N)^2
    let null = 1.0 / classes as f64;
    let h = homophily(&ds.graph, &ds.labels);
    assert!(h > null + 0.2, "homophily {h} vs null {null}");

    let flat = generate_synthetic(&SynthConfig {
        inter_edge_prob: cfg.intra_edge_prob,
        ..cfg
    })
    .unwrap();
    let h_flat = homophily(&flat.graph, &flat.labels);
    assert!((h_flat - null).abs() < 0.02, "flat homophily {h_flat}");
}
