//! Typed heterogeneous graph storage.
//!
//! Node ids are dense and 0-based within each node type. Every relation is a
//! directed edge type `src_type -> dst_type` stored in compressed-sparse-row
//! layout over its source nodes, with destinations sorted inside each row.
//! Reverse relations are never implied; they must be declared explicitly.

mod io;
mod normalize;
mod synthetic;

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};

pub use io::{load_graph, load_labels, load_splits, write_graph, write_labels, write_splits};
pub use normalize::{normalize, NormMode, NormalizedAdjacency};
pub use synthetic::{gen_synthetic, RelationSpec, SyntheticDataset, SyntheticSpec};

/// Index of a node type inside a [`HeteroGraph`].
pub type TypeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeType {
    pub name: String,
    pub count: usize,
}

/// Sparsity pattern shared between a relation and its normalized views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrStructure {
    pub n_rows: usize,
    pub n_cols: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
}

impl CsrStructure {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r + 1]
    }

    /// Checks offsets are monotone and indices are in range.
    pub fn validate(&self) -> Result<()> {
        if self.offsets.len() != self.n_rows + 1 {
            return Err(Error::Schema(format!(
                "csr offsets length {} != rows + 1 ({})",
                self.offsets.len(),
                self.n_rows + 1
            )));
        }
        if self.offsets[0] != 0 || *self.offsets.last().unwrap() != self.indices.len() {
            return Err(Error::Schema("csr offsets do not span the index array".into()));
        }
        if self.offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Schema("csr offsets are not monotone".into()));
        }
        if let Some(&bad) = self.indices.iter().find(|&&c| c as usize >= self.n_cols) {
            return Err(Error::Schema(format!(
                "csr index {bad} out of range for {} columns",
                self.n_cols
            )));
        }
        Ok(())
    }

    /// Sum of stored values for entry (row, col); zero when absent.
    pub(crate) fn lookup(&self, values: &[f64], row: usize, col: usize) -> f64 {
        let range = self.row(row);
        let slice = &self.indices[range.clone()];
        let lo = slice.partition_point(|&c| (c as usize) < col);
        let hi = slice.partition_point(|&c| (c as usize) <= col);
        values[range.start + lo..range.start + hi].iter().sum()
    }
}

/// A directed, typed edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub name: String,
    pub src_type: TypeId,
    pub dst_type: TypeId,
    pub structure: Arc<CsrStructure>,
    pub weights: Vec<f64>,
}

impl Relation {
    /// Builds a relation from `(src, dst, weight)` triples. Duplicate edges are
    /// kept as separate entries.
    pub fn from_edges(
        name: impl Into<String>,
        src_type: TypeId,
        dst_type: TypeId,
        n_src: usize,
        n_dst: usize,
        mut edges: Vec<(u32, u32, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        for &(s, d, w) in &edges {
            if s as usize >= n_src || d as usize >= n_dst {
                return Err(Error::Schema(format!(
                    "relation {name}: edge ({s}, {d}) outside {n_src}x{n_dst}"
                )));
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::Schema(format!(
                    "relation {name}: edge ({s}, {d}) has non-positive or non-finite weight {w}"
                )));
            }
        }
        edges.sort_by_key(|e| (e.0, e.1));
        let mut offsets = vec![0usize; n_src + 1];
        for &(s, _, _) in &edges {
            offsets[s as usize + 1] += 1;
        }
        for i in 0..n_src {
            offsets[i + 1] += offsets[i];
        }
        let indices = edges.iter().map(|e| e.1).collect();
        let weights = edges.iter().map(|e| e.2).collect();
        Ok(Relation {
            name,
            src_type,
            dst_type,
            structure: Arc::new(CsrStructure {
                n_rows: n_src,
                n_cols: n_dst,
                offsets,
                indices,
            }),
            weights,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.structure.nnz()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.structure.n_rows).flat_map(move |s| {
            self.structure
                .row(s)
                .map(move |k| (s, self.structure.indices[k] as usize, self.weights[k]))
        })
    }
}

/// Heterogeneous graph with a single target node type.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    node_types: Vec<NodeType>,
    relations: Vec<Relation>,
    target: TypeId,
    row_norm: OnceLock<Vec<NormalizedAdjacency>>,
    sym_norm: OnceLock<Vec<NormalizedAdjacency>>,
}

impl PartialEq for HeteroGraph {
    fn eq(&self, other: &Self) -> bool {
        self.node_types == other.node_types && self.relations == other.relations && self.target == other.target
    }
}

impl HeteroGraph {
    pub fn new(node_types: Vec<NodeType>, relations: Vec<Relation>, target_type: &str) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, t) in node_types.iter().enumerate() {
            if seen.insert(t.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node type {}", t.name)));
            }
        }
        let target = *seen
            .get(target_type)
            .ok_or_else(|| Error::Schema(format!("target type {target_type} is not a declared node type")))?;
        let mut rel_names = HashMap::new();
        for r in &relations {
            if rel_names.insert(r.name.as_str(), ()).is_some() {
                return Err(Error::Schema(format!("duplicate relation {}", r.name)));
            }
            let (src, dst) = match (node_types.get(r.src_type), node_types.get(r.dst_type)) {
                (Some(s), Some(d)) => (s, d),
                _ => return Err(Error::Schema(format!("relation {} references an unknown type", r.name))),
            };
            if r.structure.n_rows != src.count || r.structure.n_cols != dst.count {
                return Err(Error::Schema(format!(
                    "relation {} shape {}x{} does not match types {}({}) -> {}({})",
                    r.name, r.structure.n_rows, r.structure.n_cols, src.name, src.count, dst.name, dst.count
                )));
            }
            r.structure.validate()?;
            if r.weights.len() != r.structure.nnz() || r.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Schema(format!("relation {} has invalid weights", r.name)));
            }
        }
        Ok(HeteroGraph {
            node_types,
            relations,
            target,
            row_norm: OnceLock::new(),
            sym_norm: OnceLock::new(),
        })
    }

    pub fn node_types(&self) -> &[NodeType] {
        &self.node_types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn target_type(&self) -> TypeId {
        self.target
    }

    pub fn target_name(&self) -> &str {
        &self.node_types[self.target].name
    }

    /// Number of target nodes.
    pub fn num_targets(&self) -> usize {
        self.node_types[self.target].count
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.iter().map(|t| t.count).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.relations.iter().map(Relation::num_edges).sum()
    }

    pub fn type_id(&self, name: &str) -> Option<TypeId> {
        self.node_types.iter().position(|t| t.name == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    /// Normalized adjacency for every relation, computed once per mode.
    pub fn normalized(&self, mode: NormMode) -> &[NormalizedAdjacency] {
        let cell = match mode {
            NormMode::RowStochastic => &self.row_norm,
            NormMode::Symmetric => &self.sym_norm,
        };
        cell.get_or_init(|| self.relations.iter().map(|r| normalize(r, mode)).collect())
    }
}

/// Incremental construction from named types and edges.
type PendingRelation = (String, TypeId, TypeId, Vec<(u32, u32, f64)>);

#[derive(Debug, Default)]
pub struct GraphBuilder {
    node_types: Vec<NodeType>,
    relations: Vec<PendingRelation>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_type(mut self, name: &str, count: usize) -> Self {
        self.add_node_type(name, count);
        self
    }

    pub fn add_node_type(&mut self, name: &str, count: usize) {
        self.node_types.push(NodeType {
            name: name.to_string(),
            count,
        });
    }

    fn type_of(&self, name: &str) -> Result<TypeId> {
        self.node_types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown node type {name}")))
    }

    /// Declares a relation; edges may be added afterwards.
    pub fn add_relation(&mut self, name: &str, src: &str, dst: &str) -> Result<usize> {
        let (s, d) = (self.type_of(src)?, self.type_of(dst)?);
        if let Some(i) = self.relations.iter().position(|r| r.0 == name) {
            let r = &self.relations[i];
            if r.1 != s || r.2 != d {
                return Err(Error::Schema(format!(
                    "relation {name} used with types {src}->{dst} but declared {}->{}",
                    self.node_types[r.1].name, self.node_types[r.2].name
                )));
            }
            return Ok(i);
        }
        self.relations.push((name.to_string(), s, d, Vec::new()));
        Ok(self.relations.len() - 1)
    }

    pub fn add_edge(&mut self, relation: usize, src: u32, dst: u32, weight: f64) {
        self.relations[relation].3.push((src, dst, weight));
    }

    pub fn edge(mut self, src: &str, src_id: u32, relation: &str, dst: &str, dst_id: u32) -> Result<Self> {
        let r = self.add_relation(relation, src, dst)?;
        self.add_edge(r, src_id, dst_id, 1.0);
        Ok(self)
    }

    /// Adds `rel` and its explicit reverse `rev` for every pair.
    pub fn undirected(mut self, rel: &str, rev: &str, a: &str, b: &str, pairs: &[(u32, u32)]) -> Result<Self> {
        let f = self.add_relation(rel, a, b)?;
        let r = self.add_relation(rev, b, a)?;
        for &(x, y) in pairs {
            self.add_edge(f, x, y, 1.0);
            self.add_edge(r, y, x, 1.0);
        }
        Ok(self)
    }

    pub fn build(self, target_type: &str) -> Result<HeteroGraph> {
        let mut relations = Vec::with_capacity(self.relations.len());
        for (name, s, d, edges) in self.relations {
            let (ns, nd) = (self.node_types[s].count, self.node_types[d].count);
            relations.push(Relation::from_edges(name, s, d, ns, nd, edges)?);
        }
        HeteroGraph::new(self.node_types, relations, target_type)
    }
}

/// Single-type graph whose only relation `rel` holds both directions of each pair.
pub fn homogeneous(n: usize, pairs: &[(u32, u32)]) -> Result<HeteroGraph> {
    let mut b = GraphBuilder::new().node_type("node", n);
    let r = b.add_relation("rel", "node", "node")?;
    for &(x, y) in pairs {
        b.add_edge(r, x, y, 1.0);
        b.add_edge(r, y, x, 1.0);
    }
    b.build("node")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_graph_counts() {
        let g = GraphBuilder::new()
            .node_type("paper", 3)
            .node_type("author", 2)
            .edge("author", 0, "writes", "paper", 1)
            .unwrap()
            .build("paper")
            .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_targets(), 3);
        assert_eq!(g.target_name(), "paper");
    }

    #[test]
    fn unknown_target_is_schema_error() {
        let err = GraphBuilder::new().node_type("a", 1).build("b").unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn relation_type_conflict() {
        let err = GraphBuilder::new()
            .node_type("a", 2)
            .node_type("b", 2)
            .edge("a", 0, "r", "b", 1)
            .unwrap()
            .edge("b", 0, "r", "a", 1)
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn csr_rows_sorted_with_duplicates() {
        let r = Relation::from_edges("r", 0, 0, 3, 3, vec![(0, 2, 1.0), (0, 1, 1.0), (0, 2, 2.0)]).unwrap();
        assert_eq!(r.structure.offsets, vec![0, 3, 3, 3]);
        assert_eq!(r.structure.indices, vec![1, 2, 2]);
        assert_eq!(r.structure.lookup(&r.weights, 0, 2), 3.0);
        assert_eq!(r.structure.lookup(&r.weights, 1, 0), 0.0);
        r.structure.validate().unwrap();
    }

    #[test]
    fn csr_validation_rejects_bad_layouts() {
        let bad = CsrStructure {
            n_rows: 2,
            n_cols: 2,
            offsets: vec![0, 2, 1],
            indices: vec![0],
        };
        assert!(bad.validate().is_err());
        let oob = CsrStructure {
            n_rows: 1,
            n_cols: 2,
            offsets: vec![0, 1],
            indices: vec![5],
        };
        assert!(oob.validate().is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(Relation::from_edges("r", 0, 0, 1, 1, vec![(0, 0, f64::NAN)]).is_err());
        assert!(Relation::from_edges("r", 0, 0, 1, 1, vec![(0, 0, 0.0)]).is_err());
    }
}
