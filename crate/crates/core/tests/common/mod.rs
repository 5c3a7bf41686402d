#![allow(dead_code)]

use echoless::graph::{
    gen_synthetic, HeteroGraph, NormMode, NormalizedAdjacency, RelationSpec, SyntheticDataset, SyntheticSpec,
};
use echoless::labels::LabelMatrix;
use echoless::matrix::Matrix;
use echoless::propagation::{MessagePassingPlan, PlanFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub data: SyntheticDataset,
    pub labels: LabelMatrix,
    /// Linear plan families valid on this graph.
    pub families: Vec<PlanFamily>,
}

fn rel(name: &str, src: &str, dst: &str, avg_degree: f64, reverse: &str) -> RelationSpec {
    RelationSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        avg_degree,
        reverse: Some(reverse.into()),
    }
}

/// Random two- or three-type graph with papers as targets.
pub fn random_case(seed: u64, min_n: usize, max_n: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa5a5);
    let n = rng.gen_range(min_n..=max_n);
    let authors = rng.gen_range(1..=n.max(2));
    let mut node_types = vec![("paper".to_string(), n), ("author".to_string(), authors)];
    let mut relations = vec![rel("written_by", "paper", "author", rng.gen_range(0.5..3.0), "writes")];
    let mut families = vec![
        PlanFamily::HopAveraged,
        PlanFamily::Metapath {
            base: vec!["written_by".into(), "writes".into()],
        },
    ];
    if rng.gen_bool(0.6) {
        relations.push(rel("cites", "paper", "paper", rng.gen_range(0.2..2.5), "cited_by"));
        families.push(PlanFamily::Metapath {
            base: vec!["cites".into()],
        });
    }
    if rng.gen_bool(0.5) {
        node_types.push(("venue".to_string(), rng.gen_range(1..=8)));
        relations.push(rel("published_in", "paper", "venue", 1.0, "publishes"));
        families.push(PlanFamily::Metapath {
            base: vec!["published_in".into(), "publishes".into()],
        });
    }
    let spec = SyntheticSpec {
        node_types,
        target_type: "paper".into(),
        relations,
        num_classes: rng.gen_range(2..=5),
        train_fraction: rng.gen_range(0.2..0.8),
        valid_fraction: None,
        feature_dim: 0,
    };
    let data = gen_synthetic(&spec, seed).unwrap();
    let labels = LabelMatrix::from_truth(&data.truth, &data.split).unwrap();
    Case { data, labels, families }
}

pub fn dense(adj: &NormalizedAdjacency) -> Matrix {
    let mut m = Matrix::zeros(adj.n_rows(), adj.n_cols());
    for i in 0..adj.n_rows() {
        for j in 0..adj.n_cols() {
            m.set(i, j, adj.get(i, j));
        }
    }
    m
}

/// Dense reference for any plan: explicit matrix products, left to right
/// for metapaths, per-type dense states for hop-averaged operators.
pub fn dense_propagate(plan: &MessagePassingPlan, x: &Matrix, g: &HeteroGraph) -> Matrix {
    let adj = g.normalized(plan.norm());
    match plan {
        MessagePassingPlan::Metapath { relations, .. } => {
            let ids: Vec<usize> = relations.iter().map(|r| g.relation_id(r).unwrap()).collect();
            let mut op = dense(&adj[ids[0]]);
            for &id in &ids[1..] {
                op = op.matmul(&dense(&adj[id]));
            }
            op.matmul(x)
        }
        MessagePassingPlan::HopAveraged { hops, .. } | MessagePassingPlan::NonlinearNormalized { hops, .. } => {
            let nonlinear = matches!(plan, MessagePassingPlan::NonlinearNormalized { .. });
            let types = g.node_types();
            let mut state: Vec<Matrix> = types.iter().map(|t| Matrix::zeros(t.count, x.cols())).collect();
            state[g.target_type()] = x.clone();
            for hop in 0..*hops {
                let mut next: Vec<Matrix> = types.iter().map(|t| Matrix::zeros(t.count, x.cols())).collect();
                for (t, slot) in next.iter_mut().enumerate() {
                    let rels: Vec<usize> = (0..g.relations().len())
                        .filter(|&r| g.relations()[r].src_type == t)
                        .collect();
                    for &r in &rels {
                        let contrib = dense(&adj[r]).matmul(&state[g.relations()[r].dst_type]);
                        slot.axpy(1.0 / rels.len() as f64, &contrib);
                    }
                }
                state = next;
                if nonlinear && hop + 1 < *hops {
                    for s in &mut state {
                        for i in 0..s.rows() {
                            let norm = s.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                            if norm > 0.0 {
                                s.row_mut(i).iter_mut().for_each(|v| *v /= norm);
                            }
                        }
                    }
                }
            }
            state.swap_remove(g.target_type())
        }
    }
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

pub const NORMS: [NormMode; 2] = [NormMode::RowStochastic, NormMode::Symmetric];
