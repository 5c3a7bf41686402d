//! Seeded random heterogeneous graphs with structure-independent labels.
//!
//! Labels are drawn uniformly and independently of the edges, so no encoder
//! can beat chance on held-out nodes. Any train accuracy above chance on
//! such a fixture comes from a node seeing its own label.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphBuilder, HeteroGraph};
use crate::error::{Error, Result};
use crate::labels::{GroundTruth, Split, SplitAssignment};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub name: String,
    pub src: String,
    pub dst: String,
    /// Expected out-degree of a source node (edge density).
    pub avg_degree: f64,
    /// Name of an explicitly generated reverse relation, if any.
    #[serde(default)]
    pub reverse: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub node_types: Vec<(String, usize)>,
    pub target_type: String,
    pub relations: Vec<RelationSpec>,
    pub num_classes: usize,
    pub train_fraction: f64,
    /// Defaults to half of the non-training nodes.
    #[serde(default)]
    pub valid_fraction: Option<f64>,
    #[serde(default)]
    pub feature_dim: usize,
}

impl SyntheticSpec {
    /// Papers and authors linked by authorship in both directions, plus
    /// paper citations with an explicit reverse relation.
    pub fn academic(num_papers: usize, num_classes: usize, train_fraction: f64, avg_degree: f64) -> Self {
        let authors = num_papers.div_ceil(2).max(1);
        Self {
            node_types: vec![("paper".into(), num_papers), ("author".into(), authors)],
            target_type: "paper".into(),
            relations: vec![
                RelationSpec {
                    name: "written_by".into(),
                    src: "paper".into(),
                    dst: "author".into(),
                    avg_degree,
                    reverse: Some("writes".into()),
                },
                RelationSpec {
                    name: "cites".into(),
                    src: "paper".into(),
                    dst: "paper".into(),
                    avg_degree,
                    reverse: Some("cited_by".into()),
                },
            ],
            num_classes,
            train_fraction,
            valid_fraction: None,
            feature_dim: 0,
        }
    }

    /// Papers and a pool of small author groups: every author writes about
    /// `papers_per_author` papers, so the paper-author-paper walk returns to
    /// its start with high probability.
    pub fn clustered(num_papers: usize, num_classes: usize, train_fraction: f64, papers_per_author: f64) -> Self {
        let authors = ((num_papers as f64 / papers_per_author).round() as usize).max(1);
        Self {
            node_types: vec![("paper".into(), num_papers), ("author".into(), authors)],
            target_type: "paper".into(),
            relations: vec![RelationSpec {
                name: "written_by".into(),
                src: "paper".into(),
                dst: "author".into(),
                avg_degree: 1.0,
                reverse: Some("writes".into()),
            }],
            num_classes,
            train_fraction,
            valid_fraction: None,
            feature_dim: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub graph: HeteroGraph,
    pub truth: GroundTruth,
    pub split: SplitAssignment,
    pub features: Option<Matrix>,
}

pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    let target_count = spec
        .node_types
        .iter()
        .find(|(n, _)| *n == spec.target_type)
        .map(|(_, c)| *c)
        .ok_or_else(|| Error::Config(format!("target type {} not declared", spec.target_type)))?;
    if target_count == 0 {
        return Err(Error::Config("synthetic spec has zero target nodes".into()));
    }
    if spec.num_classes == 0 {
        return Err(Error::Config("synthetic spec needs at least one class".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} not in (0, 1]",
            spec.train_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    for (name, count) in &spec.node_types {
        b.add_node_type(name, *count);
    }
    for rs in &spec.relations {
        if !(rs.avg_degree >= 0.0 && rs.avg_degree.is_finite()) {
            return Err(Error::Config(format!(
                "relation {}: bad degree {}",
                rs.name, rs.avg_degree
            )));
        }
        let fwd = b.add_relation(&rs.name, &rs.src, &rs.dst)?;
        let rev = match &rs.reverse {
            Some(r) => Some(b.add_relation(r, &rs.dst, &rs.src)?),
            None => None,
        };
        let n_src = b.node_types[b.type_of(&rs.src)?].count;
        let n_dst = b.node_types[b.type_of(&rs.dst)?].count;
        if n_src == 0 || n_dst == 0 {
            continue;
        }
        let same = rs.src == rs.dst;
        if same && n_src < 2 {
            continue;
        }
        let m = (rs.avg_degree * n_src as f64).round() as usize;
        for _ in 0..m {
            let s = rng.gen_range(0..n_src) as u32;
            let d = loop {
                let d = rng.gen_range(0..n_dst) as u32;
                if !(same && d == s) {
                    break d;
                }
            };
            b.add_edge(fwd, s, d, 1.0);
            if let Some(r) = rev {
                b.add_edge(r, d, s, 1.0);
            }
        }
    }
    let graph = b.build(&spec.target_type)?;

    let classes = (0..target_count)
        .map(|_| Some(rng.gen_range(0..spec.num_classes)))
        .collect();
    let truth = GroundTruth::new(classes, spec.num_classes)?;

    let mut order: Vec<usize> = (0..target_count).collect();
    order.shuffle(&mut rng);
    let n_train = ((spec.train_fraction * target_count as f64).round() as usize).clamp(1, target_count);
    let valid_fraction = spec.valid_fraction.unwrap_or((1.0 - spec.train_fraction) / 2.0);
    let n_valid = ((valid_fraction * target_count as f64).round() as usize).min(target_count - n_train);
    let mut splits = vec![Split::Test; target_count];
    for (rank, &v) in order.iter().enumerate() {
        if rank < n_train {
            splits[v] = Split::Train;
        } else if rank < n_train + n_valid {
            splits[v] = Split::Valid;
        }
    }

    let features = (spec.feature_dim > 0).then(|| {
        let data = (0..target_count * spec.feature_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(target_count, spec.feature_dim, data)
    });

    Ok(SyntheticDataset {
        graph,
        truth,
        split: SplitAssignment::new(splits),
        features,
    })
}
