//! Baseline label pre-computation strategies.

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::labels::LabelMatrix;
use crate::propagation::{effective_diagonal, estimate_dense_bytes, propagate, MessagePassingPlan, PropagatedTensor};

/// Propagates `Y` unmasked. A training node's own label can return to it.
pub fn plain_lp(plan: &MessagePassingPlan, graph: &HeteroGraph, labels: &LabelMatrix) -> Result<PropagatedTensor> {
    Ok(PropagatedTensor::without_retention(propagate(
        plan,
        labels.matrix(),
        graph,
    )?))
}

/// Fails before any work when the plan would need a dense matrix larger than
/// `mem_cap`, or cannot be expressed as a matrix at all.
pub fn check_remove_diag(plan: &MessagePassingPlan, graph: &HeteroGraph, mem_cap: u64) -> Result<()> {
    if !plan.is_linear() {
        return Err(Error::UnsupportedOperator(format!(
            "diagonal removal needs linear message passing; {} is not linear",
            plan.describe()
        )));
    }
    if plan.hops() > 2 {
        let est = estimate_dense_bytes(graph.num_targets() as u64, 8);
        if est.exceeds(mem_cap) {
            return Err(Error::MemoryGuard {
                estimate_bytes: est.bytes,
                cap_bytes: mem_cap,
                overflow: est.overflow,
            });
        }
    }
    Ok(())
}

/// `(Ã - diag(Ã)) Y`, computed as `ÃY - diag(Ã) ∘ Y`. `ÃY` is always
/// evaluated right to left; only the diagonal may need the dense matrix.
pub fn remove_diag_lp(
    plan: &MessagePassingPlan,
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    mem_cap: u64,
) -> Result<PropagatedTensor> {
    check_remove_diag(plan, graph, mem_cap)?;
    let diag = effective_diagonal(plan, graph, mem_cap)?;
    let y = labels.matrix();
    let mut out = propagate(plan, y, graph)?;
    for (v, d) in diag.iter().enumerate() {
        if *d != 0.0 {
            for (o, yv) in out.row_mut(v).iter_mut().zip(y.row(v)) {
                *o -= d * yv;
            }
        }
    }
    Ok(PropagatedTensor::without_retention(out))
}

/// Keeps only hops `k >= k_min` of plain propagation. Echo is reduced at best,
/// not removed.
pub fn last_residual_lp(
    plans: &[MessagePassingPlan],
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    k_min: usize,
) -> Result<Vec<PropagatedTensor>> {
    if k_min == 0 || k_min > plans.len() {
        return Err(Error::Config(format!("k_min {k_min} outside 1..={}", plans.len())));
    }
    plans[k_min - 1..].iter().map(|p| plain_lp(p, graph, labels)).collect()
}
