//! Message passing operators shared by feature and label pre-computation.

mod effective;
mod plan;
mod tensor;

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NormalizedAdjacency};
use crate::matrix::{spmm, Matrix};

pub use effective::{
    effective_diagonal, effective_matrix, estimate_dense_bytes, sparse_two_hop_diagonal, ByteEstimate,
    EffectivePropagation,
};
pub use plan::{MessagePassingPlan, OperatorKind, PlanFamily};
pub use tensor::{read_elpt, sidecar_path, write_elpt, Dtype, PropagatedTensor, TensorMetadata};

/// Applies `plan` to a target-node input (`N x width`), evaluating right to
/// left so the multi-hop matrix is never formed. Non-target node types start
/// at zero.
pub fn propagate(plan: &MessagePassingPlan, input: &Matrix, graph: &HeteroGraph) -> Result<Matrix> {
    let ids = plan.validate(graph)?;
    let n = graph.num_targets();
    if input.rows() != n {
        return Err(Error::Shape(format!(
            "input has {} rows, graph has {n} target nodes",
            input.rows()
        )));
    }
    if !input.is_finite() {
        return Err(Error::Numeric("non-finite value in propagation input".into()));
    }
    let adj = graph.normalized(plan.norm());
    let out = match plan {
        MessagePassingPlan::Metapath { .. } => {
            let mut iter = ids.iter().rev();
            let first = iter.next().expect("validated non-empty");
            let mut x = spmm(&adj[*first], input);
            for &id in iter {
                x = spmm(&adj[id], &x);
            }
            x
        }
        MessagePassingPlan::HopAveraged { hops, .. } => hop_averaged(graph, adj, input, *hops, false),
        MessagePassingPlan::NonlinearNormalized { hops, .. } => hop_averaged(graph, adj, input, *hops, true),
    };
    if !out.is_finite() {
        return Err(Error::Numeric(format!(
            "{} produced a non-finite value",
            plan.describe()
        )));
    }
    Ok(out)
}

fn hop_averaged(
    graph: &HeteroGraph,
    adj: &[NormalizedAdjacency],
    input: &Matrix,
    hops: usize,
    normalize_between: bool,
) -> Matrix {
    let types = graph.node_types();
    let width = input.cols();
    // None marks an all-zero state.
    let mut state: Vec<Option<Matrix>> = vec![None; types.len()];
    state[graph.target_type()] = Some(input.clone());
    for hop in 0..hops {
        let mut next: Vec<Option<Matrix>> = vec![None; types.len()];
        for (t, slot) in next.iter_mut().enumerate() {
            let outgoing: Vec<usize> = graph
                .relations()
                .iter()
                .enumerate()
                .filter(|(_, r)| r.src_type == t)
                .map(|(i, _)| i)
                .collect();
            let mut acc: Option<Matrix> = None;
            for &r in &outgoing {
                let Some(x) = &state[graph.relations()[r].dst_type] else {
                    continue;
                };
                let y = spmm(&adj[r], x);
                match &mut acc {
                    Some(a) => a.axpy(1.0, &y),
                    None => acc = Some(y),
                }
            }
            if let Some(a) = &mut acc {
                a.scale(1.0 / outgoing.len() as f64);
            }
            *slot = acc;
        }
        state = next;
        if normalize_between && hop + 1 < hops {
            state.iter_mut().flatten().for_each(Matrix::normalize_rows_l2);
        }
    }
    state[graph.target_type()]
        .take()
        .unwrap_or_else(|| Matrix::zeros(input.rows(), width))
}
