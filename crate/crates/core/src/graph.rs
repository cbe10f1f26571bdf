//! Typed heterogeneous graphs and meta-path adjacency composition.
//!
//! Each declared edge type is stored in one direction only. A meta-path is a
//! sequence of node-type names; every consecutive pair resolves to the first
//! declared edge type with that `(src, dst)` pair.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseRowMatrix;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTypeSchema {
    pub name: String,
    pub count: usize,
    #[serde(default)]
    pub feature_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTypeSchema {
    pub name: String,
    #[serde(rename = "src")]
    pub src_type: String,
    #[serde(rename = "dst")]
    pub dst_type: String,
}

/// Node and edge type declarations plus the target type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSchema {
    pub node_types: Vec<NodeTypeSchema>,
    pub edge_types: Vec<EdgeTypeSchema>,
    pub target_type: String,
}

impl GraphSchema {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for nt in &self.node_types {
            if nt.name.is_empty() || nt.name.contains('-') {
                return Err(Error::InvalidSchema(format!(
                    "node type name `{}` must be non-empty and free of '-'",
                    nt.name
                )));
            }
            if !seen.insert(nt.name.as_str()) {
                return Err(Error::InvalidSchema(format!("node type `{}` declared twice", nt.name)));
            }
            if nt.count == 0 {
                return Err(Error::InvalidSchema(format!("node type `{}` has count 0", nt.name)));
            }
        }
        let mut seen_edges = HashSet::new();
        for et in &self.edge_types {
            if !seen_edges.insert(et.name.as_str()) {
                return Err(Error::InvalidSchema(format!("edge type `{}` declared twice", et.name)));
            }
            for end in [&et.src_type, &et.dst_type] {
                if self.node_type_index(end).is_none() {
                    return Err(Error::UnknownType(end.clone()));
                }
            }
        }
        if self.node_type_index(&self.target_type).is_none() {
            return Err(Error::UnknownType(self.target_type.clone()));
        }
        Ok(())
    }

    pub fn node_type_index(&self, name: &str) -> Option<usize> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn edge_type_index(&self, name: &str) -> Option<usize> {
        self.edge_types.iter().position(|t| t.name == name)
    }

    /// First declared edge type running from `src` to `dst`.
    pub fn edge_between(&self, src: &str, dst: &str) -> Option<usize> {
        self.edge_types
            .iter()
            .position(|e| e.src_type == src && e.dst_type == dst)
    }

    pub fn node_count(&self, name: &str) -> Option<usize> {
        self.node_type_index(name).map(|i| self.node_types[i].count)
    }

    pub fn total_nodes(&self) -> usize {
        self.node_types.iter().map(|t| t.count).sum()
    }
}

/// An ordered sequence of node-type names.
///
/// A single-type path is the zero-hop path and stands for a type's own
/// features; propagation paths need at least one hop.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetaPath(Vec<String>);

impl MetaPath {
    pub fn new<S: Into<String>>(types: impl IntoIterator<Item = S>) -> Result<Self> {
        let types: Vec<String> = types.into_iter().map(Into::into).collect();
        if types.is_empty() {
            return Err(Error::InvalidPath {
                path: String::new(),
                reason: "a meta-path needs at least one node type".into(),
            });
        }
        Ok(Self(types))
    }

    /// Parses `A-P-A`, or `APA` when every node type name in the schema is one character.
    pub fn parse(text: &str, schema: &GraphSchema) -> Result<Self> {
        let text = text.trim();
        let single_char = schema.node_types.iter().all(|t| t.name.chars().count() == 1);
        let parts: Vec<String> = if text.contains('-') || !single_char {
            text.split('-').map(|s| s.trim().to_string()).collect()
        } else {
            text.chars().map(String::from).collect()
        };
        if parts.iter().any(String::is_empty) {
            return Err(Error::InvalidPath {
                path: text.into(),
                reason: "empty type name".into(),
            });
        }
        Self::new(parts)
    }

    pub fn types(&self) -> &[String] {
        &self.0
    }

    pub fn hops(&self) -> usize {
        self.0.len() - 1
    }

    pub fn start(&self) -> &str {
        &self.0[0]
    }

    pub fn end(&self) -> &str {
        &self.0[self.0.len() - 1]
    }
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|t| t.chars().count() == 1) {
            f.write_str(&self.0.concat())
        } else {
            f.write_str(&self.0.join("-"))
        }
    }
}

/// Validated, immutable heterogeneous graph.
///
/// Normalized per-hop adjacencies and composed meta-path adjacencies are
/// cached on first use and shared through `Arc`.
pub struct HeteroGraph {
    schema: GraphSchema,
    edges: Vec<Vec<(usize, usize)>>,
    features: Vec<Array2<f64>>,
    hop_cache: Vec<OnceLock<Arc<SparseRowMatrix>>>,
    path_cache: Mutex<HashMap<Vec<usize>, Arc<SparseRowMatrix>>>,
}

impl Clone for HeteroGraph {
    fn clone(&self) -> Self {
        Self::from_validated(self.schema.clone(), self.edges.clone(), self.features.clone())
    }
}

impl fmt::Debug for HeteroGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeteroGraph")
            .field("schema", &self.schema)
            .field("edge_counts", &self.edges.iter().map(Vec::len).collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl HeteroGraph {
    /// Validates and assembles a graph.
    ///
    /// `edges` and `features` are keyed by type name. Missing edge lists are
    /// empty; a featured node type must supply a `count x feature_dim` matrix,
    /// and a featureless type may be omitted.
    pub fn build(
        schema: GraphSchema,
        mut edges: BTreeMap<String, Vec<(usize, usize)>>,
        mut features: BTreeMap<String, Array2<f64>>,
    ) -> Result<Self> {
        schema.validate()?;
        if let Some(name) = edges.keys().find(|k| schema.edge_type_index(k).is_none()) {
            return Err(Error::UnknownType(name.clone()));
        }
        if let Some(name) = features.keys().find(|k| schema.node_type_index(k).is_none()) {
            return Err(Error::UnknownType(name.clone()));
        }

        let mut edge_lists = Vec::with_capacity(schema.edge_types.len());
        for et in &schema.edge_types {
            let pairs = edges.remove(&et.name).unwrap_or_default();
            let n_src = schema.node_count(&et.src_type).unwrap_or(0);
            let n_dst = schema.node_count(&et.dst_type).unwrap_or(0);
            let mut seen = HashSet::with_capacity(pairs.len());
            for &(s, d) in &pairs {
                if s >= n_src {
                    return Err(Error::IndexOutOfRange {
                        context: format!("{} source ({})", et.name, et.src_type),
                        index: s,
                        bound: n_src,
                    });
                }
                if d >= n_dst {
                    return Err(Error::IndexOutOfRange {
                        context: format!("{} destination ({})", et.name, et.dst_type),
                        index: d,
                        bound: n_dst,
                    });
                }
                if !seen.insert((s, d)) {
                    return Err(Error::DuplicateEdge {
                        edge_type: et.name.clone(),
                        src: s,
                        dst: d,
                    });
                }
            }
            edge_lists.push(pairs);
        }

        let mut feature_mats = Vec::with_capacity(schema.node_types.len());
        for nt in &schema.node_types {
            let mat = match features.remove(&nt.name) {
                Some(m) => m,
                None if nt.feature_dim == 0 => Array2::zeros((nt.count, 0)),
                None => {
                    return Err(Error::DimensionMismatch(format!(
                        "node type `{}` declares {} features but none were supplied",
                        nt.name, nt.feature_dim
                    )))
                }
            };
            if mat.dim() != (nt.count, nt.feature_dim) {
                return Err(Error::DimensionMismatch(format!(
                    "features of `{}` are {}x{}, expected {}x{}",
                    nt.name,
                    mat.nrows(),
                    mat.ncols(),
                    nt.count,
                    nt.feature_dim
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("features of `{}`", nt.name)));
            }
            feature_mats.push(mat);
        }

        Ok(Self::from_validated(schema, edge_lists, feature_mats))
    }

    fn from_validated(schema: GraphSchema, edges: Vec<Vec<(usize, usize)>>, features: Vec<Array2<f64>>) -> Self {
        let hop_cache = (0..schema.edge_types.len()).map(|_| OnceLock::new()).collect();
        Self {
            schema,
            edges,
            features,
            hop_cache,
            path_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn schema(&self) -> &GraphSchema {
        &self.schema
    }

    pub fn target_type(&self) -> &str {
        &self.schema.target_type
    }

    pub fn target_count(&self) -> usize {
        self.schema.node_count(&self.schema.target_type).unwrap_or(0)
    }

    pub fn edges(&self, edge_type: &str) -> Result<&[(usize, usize)]> {
        let idx = self
            .schema
            .edge_type_index(edge_type)
            .ok_or_else(|| Error::UnknownType(edge_type.into()))?;
        Ok(&self.edges[idx])
    }

    pub fn features(&self, node_type: &str) -> Result<&Array2<f64>> {
        let idx = self
            .schema
            .node_type_index(node_type)
            .ok_or_else(|| Error::UnknownType(node_type.into()))?;
        Ok(&self.features[idx])
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Binary `count(src) x count(dst)` adjacency of one edge type.
    pub fn adjacency(&self, edge_type: &str) -> Result<SparseRowMatrix> {
        let idx = self
            .schema
            .edge_type_index(edge_type)
            .ok_or_else(|| Error::UnknownType(edge_type.into()))?;
        self.adjacency_by_index(idx)
    }

    fn adjacency_by_index(&self, idx: usize) -> Result<SparseRowMatrix> {
        let et = &self.schema.edge_types[idx];
        let n_src = self.schema.node_count(&et.src_type).unwrap_or(0);
        let n_dst = self.schema.node_count(&et.dst_type).unwrap_or(0);
        SparseRowMatrix::from_pairs(n_src, n_dst, &self.edges[idx])
    }

    fn normalized_hop(&self, idx: usize) -> Result<Arc<SparseRowMatrix>> {
        if let Some(m) = self.hop_cache[idx].get() {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(self.adjacency_by_index(idx)?.row_normalize()?);
        Ok(Arc::clone(self.hop_cache[idx].get_or_init(|| m)))
    }

    /// Edge-type indices of each hop, or `InvalidPath` when a hop is undeclared.
    pub fn resolve(&self, path: &MetaPath) -> Result<Vec<usize>> {
        for t in path.types() {
            if self.schema.node_type_index(t).is_none() {
                return Err(Error::InvalidPath {
                    path: path.to_string(),
                    reason: format!("unknown node type `{t}`"),
                });
            }
        }
        path.types()
            .windows(2)
            .map(|w| {
                self.schema
                    .edge_between(&w[0], &w[1])
                    .ok_or_else(|| Error::InvalidPath {
                        path: path.to_string(),
                        reason: format!("no edge type from `{}` to `{}`", w[0], w[1]),
                    })
            })
            .collect()
    }

    /// Product of the row-normalized hop adjacencies along `path`, left to right.
    ///
    /// When the path starts and ends at the same type, each row's missing mass
    /// goes to its diagonal (an empty row becomes a unit self-loop), so the
    /// result is row-stochastic. Results are cached.
    pub fn compose_metapath(&self, path: &MetaPath) -> Result<Arc<SparseRowMatrix>> {
        let hops = self.resolve(path)?;
        if hops.is_empty() {
            return Err(Error::InvalidPath {
                path: path.to_string(),
                reason: "composition needs at least one hop".into(),
            });
        }
        if let Some(m) = self.path_cache.lock().unwrap().get(&hops) {
            return Ok(Arc::clone(m));
        }
        let mut product = (*self.normalized_hop(hops[0])?).clone();
        for &h in &hops[1..] {
            product = product.matmul(self.normalized_hop(h)?.as_ref())?;
        }
        if path.start() == path.end() {
            product = product.with_self_loop_repair()?;
        }
        let product = Arc::new(product);
        let mut cache = self.path_cache.lock().unwrap();
        Ok(Arc::clone(cache.entry(hops).or_insert(product)))
    }

    /// Number of composed meta-path adjacencies currently cached.
    pub fn cached_paths(&self) -> usize {
        self.path_cache.lock().unwrap().len()
    }

    /// Meta-path features: normalized hop chain (no repair) times the end type's features.
    ///
    /// The zero-hop path returns the target type's own features.
    pub fn metapath_features(&self, path: &MetaPath) -> Result<Array2<f64>> {
        if path.start() != self.schema.target_type {
            return Err(Error::InvalidPath {
                path: path.to_string(),
                reason: format!("feature paths must start at `{}`", self.schema.target_type),
            });
        }
        let hops = self.resolve(path)?;
        let end = self.features(path.end())?;
        if end.ncols() == 0 {
            return Err(Error::FeaturelessEndType(path.to_string()));
        }
        let mut x = end.clone();
        for &h in hops.iter().rev() {
            x = self.normalized_hop(h)?.mul_dense(&x)?;
        }
        Ok(x)
    }

    /// All target-to-target type sequences with `1..=max_hops` hops, in lexicographic order.
    pub fn candidate_metapaths(&self, max_hops: usize) -> Vec<MetaPath> {
        let target = self.schema.target_type.clone();
        self.enumerate_paths(max_hops, |end| end == target)
            .into_iter()
            .filter(|p| p.hops() >= 1)
            .collect()
    }

    /// Default encoder inputs: the target's own features (when it has any) and
    /// every path of `1..=max_hops` hops from the target that ends at a featured type.
    pub fn default_feature_paths(&self, max_hops: usize) -> Vec<MetaPath> {
        let featured: HashSet<&str> = self
            .schema
            .node_types
            .iter()
            .filter(|t| t.feature_dim > 0)
            .map(|t| t.name.as_str())
            .collect();
        self.enumerate_paths(max_hops, |end| featured.contains(end))
    }

    fn enumerate_paths(&self, max_hops: usize, accept: impl Fn(&str) -> bool) -> Vec<MetaPath> {
        let mut out = Vec::new();
        let mut stack = vec![vec![self.schema.target_type.clone()]];
        while let Some(seq) = stack.pop() {
            let last = seq.last().unwrap();
            if accept(last) {
                out.push(MetaPath(seq.clone()));
            }
            if seq.len() - 1 == max_hops {
                continue;
            }
            let mut next: Vec<&str> = self
                .schema
                .edge_types
                .iter()
                .filter(|e| &e.src_type == last)
                .map(|e| e.dst_type.as_str())
                .collect();
            next.sort_unstable();
            next.dedup();
            for t in next {
                let mut s = seq.clone();
                s.push(t.to_string());
                stack.push(s);
            }
        }
        out.sort();
        out
    }
}
