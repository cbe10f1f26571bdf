//! Directory layout:
//!
//! ```text
//! schema.json                node/edge types, target type, optional meta-paths, max_hops
//! edges/<edge_type>.tsv      `src<TAB>dst` local ids, one edge per line
//! features/<node_type>.csv   count rows of feature_dim comma-separated floats
//! features/<node_type>.f32   or raw little-endian f32, row-major
//! labels.tsv                 `node<TAB>label` for every target node
//! splits.json                optional {train, val, test, ood_class}
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, Splits, DEFAULT_MAX_HOPS};
use crate::error::{Error, Result};
use crate::graph::{EdgeTypeSchema, GraphSchema, HeteroGraph, MetaPath, NodeTypeSchema};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    F32,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    node_types: Vec<NodeTypeSchema>,
    edge_types: Vec<EdgeTypeSchema>,
    target_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metapaths: Option<Vec<MetaPath>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_paths: Option<Vec<MetaPath>>,
    #[serde(default = "default_max_hops")]
    max_hops: usize,
}

fn default_max_hops() -> usize {
    DEFAULT_MAX_HOPS
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn validation(file: &Path, message: impl Into<String>) -> Error {
    Error::Validation {
        file: file.to_path_buf(),
        message: message.into(),
    }
}

fn parse_error(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_pair(file: &Path, line: usize, text: &str) -> Result<(usize, usize)> {
    let mut parts = text.split('\t');
    let mut next = || -> Result<usize> {
        let field = parts
            .next()
            .ok_or_else(|| parse_error(file, line, "expected two tab-separated integers"))?;
        field
            .trim()
            .parse()
            .map_err(|_| parse_error(file, line, format!("`{field}` is not a non-negative integer")))
    };
    let pair = (next()?, next()?);
    if parts.next().is_some() {
        return Err(parse_error(file, line, "expected exactly two fields"));
    }
    Ok(pair)
}

fn read_pairs(file: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(file)?;
    data_lines(&text).map(|(n, l)| parse_pair(file, n, l)).collect()
}

fn read_csv_features(file: &Path, count: usize, dim: usize) -> Result<Array2<f64>> {
    let text = read_text(file)?;
    let mut data = Vec::with_capacity(count * dim);
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let before = data.len();
        for field in l.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_error(file, line, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_error(file, line, "non-finite feature value"));
            }
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(parse_error(
                file,
                line,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != count {
        return Err(validation(file, format!("expected {count} rows, found {rows}")));
    }
    Array2::from_shape_vec((count, dim), data).map_err(|e| validation(file, e.to_string()))
}

fn read_f32_features(file: &Path, count: usize, dim: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(file).map_err(|e| Error::io(file, e))?;
    if bytes.len() != count * dim * 4 {
        return Err(validation(
            file,
            format!(
                "expected {} bytes ({count}x{dim} f32), found {}",
                count * dim * 4,
                bytes.len()
            ),
        ));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(validation(file, "non-finite feature value"));
    }
    Array2::from_shape_vec((count, dim), data).map_err(|e| validation(file, e.to_string()))
}

fn read_labels(file: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read_text(file)?;
    let mut labels = vec![None; n];
    for (line, l) in data_lines(&text) {
        let (node, label) = parse_pair(file, line, l)?;
        if node >= n {
            return Err(parse_error(
                file,
                line,
                format!("node {node} out of range (target count {n})"),
            ));
        }
        if labels[node].replace(label).is_some() {
            return Err(parse_error(file, line, format!("node {node} labeled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| validation(file, format!("target node {i} has no label"))))
        .collect()
}

/// Loads and fully validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let schema_path = dir.join("schema.json");
    let schema_file: SchemaFile = serde_json::from_str(&read_text(&schema_path)?)
        .map_err(|e| parse_error(&schema_path, e.line(), e.to_string()))?;
    let schema = GraphSchema {
        node_types: schema_file.node_types,
        edge_types: schema_file.edge_types,
        target_type: schema_file.target_type,
    };
    schema.validate().map_err(|e| validation(&schema_path, e.to_string()))?;

    let edge_dir = dir.join("edges");
    if edge_dir.is_dir() {
        let entries = fs::read_dir(&edge_dir).map_err(|e| Error::io(&edge_dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&edge_dir, e))?.path();
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            if path.extension().is_some_and(|x| x == "tsv") && schema.edge_type_index(stem).is_none() {
                return Err(validation(
                    &path,
                    format!("edge type `{stem}` is not declared in schema.json"),
                ));
            }
        }
    }

    let mut edges = BTreeMap::new();
    for et in &schema.edge_types {
        let file = edge_dir.join(format!("{}.tsv", et.name));
        let pairs = read_pairs(&file)?;
        let n_src = schema.node_count(&et.src_type).unwrap_or(0);
        let n_dst = schema.node_count(&et.dst_type).unwrap_or(0);
        if let Some(&(s, d)) = pairs.iter().find(|&&(s, d)| s >= n_src || d >= n_dst) {
            return Err(validation(
                &file,
                format!(
                    "edge ({s}, {d}) outside {} x {} ({n_src} x {n_dst})",
                    et.src_type, et.dst_type
                ),
            ));
        }
        edges.insert(et.name.clone(), pairs);
    }

    let mut features = BTreeMap::new();
    for nt in schema.node_types.iter().filter(|t| t.feature_dim > 0) {
        let raw = dir.join("features").join(format!("{}.f32", nt.name));
        let csv = dir.join("features").join(format!("{}.csv", nt.name));
        let mat = if raw.exists() {
            read_f32_features(&raw, nt.count, nt.feature_dim)?
        } else {
            read_csv_features(&csv, nt.count, nt.feature_dim)?
        };
        features.insert(nt.name.clone(), mat);
    }

    let graph = HeteroGraph::build(schema, edges, features).map_err(|e| validation(&schema_path, e.to_string()))?;

    let check_paths = |paths: &Option<Vec<MetaPath>>| -> Result<()> {
        for p in paths.iter().flatten() {
            graph.resolve(p).map_err(|e| validation(&schema_path, e.to_string()))?;
        }
        Ok(())
    };
    check_paths(&schema_file.metapaths)?;
    check_paths(&schema_file.feature_paths)?;

    let labels = read_labels(&dir.join("labels.tsv"), graph.target_count())?;

    let splits_path = dir.join("splits.json");
    let splits = if splits_path.exists() {
        let s: Splits = serde_json::from_str(&read_text(&splits_path)?)
            .map_err(|e| parse_error(&splits_path, e.line(), e.to_string()))?;
        s.validate(&labels)
            .map_err(|e| validation(&splits_path, e.to_string()))?;
        Some(s)
    } else {
        None
    };

    Ok(Dataset {
        graph,
        labels,
        splits,
        meta: DatasetMeta {
            metapaths: schema_file.metapaths,
            feature_paths: schema_file.feature_paths,
            max_hops: schema_file.max_hops,
        },
    })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `dataset` in the directory layout, creating `dir` as needed.
///
/// CSV output uses the shortest round-trip decimal form of each value.
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>, format: FeatureFormat) -> Result<()> {
    let dir = dir.as_ref();
    for sub in [dir.to_path_buf(), dir.join("edges"), dir.join("features")] {
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    let schema = dataset.graph.schema();
    let schema_file = SchemaFile {
        node_types: schema.node_types.clone(),
        edge_types: schema.edge_types.clone(),
        target_type: schema.target_type.clone(),
        metapaths: dataset.meta.metapaths.clone(),
        feature_paths: dataset.meta.feature_paths.clone(),
        max_hops: dataset.meta.max_hops,
    };
    let mut json = serde_json::to_string_pretty(&schema_file)?;
    json.push('\n');
    write(dir.join("schema.json"), json)?;

    for et in &schema.edge_types {
        let mut out = String::new();
        for &(s, d) in dataset.graph.edges(&et.name)? {
            out.push_str(&format!("{s}\t{d}\n"));
        }
        write(dir.join("edges").join(format!("{}.tsv", et.name)), out)?;
    }

    for nt in schema.node_types.iter().filter(|t| t.feature_dim > 0) {
        let mat = dataset.graph.features(&nt.name)?;
        match format {
            FeatureFormat::Csv => {
                let mut out = String::new();
                for row in mat.rows() {
                    let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    out.push_str(&fields.join(","));
                    out.push('\n');
                }
                write(dir.join("features").join(format!("{}.csv", nt.name)), out)?;
            }
            FeatureFormat::F32 => {
                let bytes: Vec<u8> = mat.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
                write(dir.join("features").join(format!("{}.f32", nt.name)), bytes)?;
            }
        }
    }

    let mut labels = String::new();
    for (i, l) in dataset.labels.iter().enumerate() {
        labels.push_str(&format!("{i}\t{l}\n"));
    }
    write(dir.join("labels.tsv"), labels)?;

    if let Some(splits) = &dataset.splits {
        let mut json = serde_json::to_string(splits)?;
        json.push('\n');
        write(dir.join("splits.json"), json)?;
    }
    Ok(())
}
