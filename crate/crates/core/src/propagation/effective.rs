//! Dense effective propagation matrices, their diagonals, and the memory
//! estimate that guards dense construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{propagate, MessagePassingPlan};
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NormalizedAdjacency};
use crate::matrix::Matrix;

/// Bytes needed for a dense `N x N` matrix; saturates on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ByteEstimate {
    pub bytes: u64,
    pub overflow: bool,
}

impl ByteEstimate {
    pub fn exceeds(&self, cap: u64) -> bool {
        self.overflow || self.bytes > cap
    }

    /// Decimal terabytes.
    pub fn terabytes(&self) -> f64 {
        self.bytes as f64 / 1e12
    }
}

pub fn estimate_dense_bytes(n: u64, dtype_bytes: u64) -> ByteEstimate {
    match n.checked_mul(n).and_then(|nn| nn.checked_mul(dtype_bytes)) {
        Some(bytes) => ByteEstimate { bytes, overflow: false },
        None => ByteEstimate {
            bytes: u64::MAX,
            overflow: true,
        },
    }
}

/// The operator restricted to target nodes, as a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectivePropagation {
    pub matrix: Matrix,
}

impl EffectivePropagation {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.matrix.rows()).map(|i| self.matrix.get(i, i)).collect()
    }

    pub fn apply(&self, y: &Matrix) -> Matrix {
        self.matrix.matmul(y)
    }
}

fn guard(n: usize, mem_cap: u64) -> Result<()> {
    let est = estimate_dense_bytes(n as u64, 8);
    if est.exceeds(mem_cap) {
        return Err(Error::MemoryGuard {
            estimate_bytes: est.bytes,
            cap_bytes: mem_cap,
            overflow: est.overflow,
        });
    }
    Ok(())
}

fn require_linear(plan: &MessagePassingPlan) -> Result<()> {
    if !plan.is_linear() {
        return Err(Error::UnsupportedOperator(format!(
            "{} is not linear message passing; no propagation matrix exists",
            plan.describe()
        )));
    }
    Ok(())
}

/// Builds `Ã` column by column from basis vectors (one propagation of the
/// identity), then checks `propagate(Y) == Ã Y` on a random probe.
pub fn effective_matrix(plan: &MessagePassingPlan, graph: &HeteroGraph, mem_cap: u64) -> Result<EffectivePropagation> {
    require_linear(plan)?;
    plan.validate(graph)?;
    let n = graph.num_targets();
    guard(n, mem_cap)?;
    let matrix = propagate(plan, &Matrix::identity(n), graph)?;
    let eff = EffectivePropagation { matrix };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let probe = Matrix::from_vec(n, 2, (0..n * 2).map(|_| rng.gen::<f64>()).collect());
    let direct = propagate(plan, &probe, graph)?;
    let dense = eff.apply(&probe);
    let scale = direct.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let diff = direct.max_abs_diff(&dense);
    if diff > 1e-12 * scale {
        return Err(Error::Numeric(format!(
            "{} failed the linearity probe (max diff {diff:e})",
            plan.describe()
        )));
    }
    Ok(eff)
}

/// `diag(A_outer · A_inner) = (A_outer ⊙ A_innerᵀ) · 1` in `O(E + N)`:
/// transpose the inner factor once, then merge-intersect sorted rows.
pub fn sparse_two_hop_diagonal(outer: &NormalizedAdjacency, inner: &NormalizedAdjacency) -> Vec<f64> {
    assert_eq!(outer.n_cols(), inner.n_rows(), "factor shapes do not chain");
    assert_eq!(outer.n_rows(), inner.n_cols(), "product is not square");
    let n = outer.n_rows();
    let s = &inner.structure;

    // Transpose of inner: row u lists (w, A_inner[w, u]) with w ascending.
    let mut t_off = vec![0usize; n + 1];
    for &c in &s.indices {
        t_off[c as usize + 1] += 1;
    }
    for i in 0..n {
        t_off[i + 1] += t_off[i];
    }
    let mut fill = t_off.clone();
    let mut t_idx = vec![0usize; s.nnz()];
    let mut t_val = vec![0.0f64; s.nnz()];
    for w in 0..s.n_rows {
        for k in s.row(w) {
            let u = s.indices[k] as usize;
            t_idx[fill[u]] = w;
            t_val[fill[u]] = inner.weights[k];
            fill[u] += 1;
        }
    }

    let o = &outer.structure;
    (0..n)
        .map(|u| {
            let (mut i, end_i) = (o.offsets[u], o.offsets[u + 1]);
            let (mut j, end_j) = (t_off[u], t_off[u + 1]);
            let mut acc = 0.0;
            while i < end_i && j < end_j {
                let (a, b) = (o.indices[i] as usize, t_idx[j]);
                if a < b {
                    i += 1;
                } else if b < a {
                    j += 1;
                } else {
                    let mut sa = 0.0;
                    while i < end_i && o.indices[i] as usize == a {
                        sa += outer.weights[i];
                        i += 1;
                    }
                    let mut sb = 0.0;
                    while j < end_j && t_idx[j] == a {
                        sb += t_val[j];
                        j += 1;
                    }
                    acc += sa * sb;
                }
            }
            acc
        })
        .collect()
}

/// `diag(Ã)` of a linear plan. One- and two-factor operators use sparse
/// formulas; longer operators need the dense matrix under `mem_cap`.
pub fn effective_diagonal(plan: &MessagePassingPlan, graph: &HeteroGraph, mem_cap: u64) -> Result<Vec<f64>> {
    require_linear(plan)?;
    let ids = plan.validate(graph)?;
    if plan.hops() > 2 {
        return Ok(effective_matrix(plan, graph, mem_cap)?.diagonal());
    }
    let adj = graph.normalized(plan.norm());
    let n = graph.num_targets();
    let tt = graph.target_type();
    match plan {
        MessagePassingPlan::Metapath { .. } => Ok(match ids.as_slice() {
            [r] => (0..n).map(|u| adj[*r].get(u, u)).collect(),
            [r1, r2] => sparse_two_hop_diagonal(&adj[*r1], &adj[*r2]),
            _ => unreachable!("hops checked above"),
        }),
        MessagePassingPlan::HopAveraged { hops, .. } => {
            let rels = graph.relations();
            let out_count = |t: usize| rels.iter().filter(|r| r.src_type == t).count() as f64;
            let mut diag = vec![0.0; n];
            let n_t = out_count(tt);
            for (i1, r1) in rels.iter().enumerate().filter(|(_, r)| r.src_type == tt) {
                if *hops == 1 {
                    if r1.dst_type == tt {
                        for (u, d) in diag.iter_mut().enumerate() {
                            *d += adj[i1].get(u, u) / n_t;
                        }
                    }
                    continue;
                }
                let mid = r1.dst_type;
                let n_mid = out_count(mid);
                for (i2, _) in rels
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.src_type == mid && r.dst_type == tt)
                {
                    let part = sparse_two_hop_diagonal(&adj[i1], &adj[i2]);
                    for (d, p) in diag.iter_mut().zip(part) {
                        *d += p / (n_t * n_mid);
                    }
                }
            }
            Ok(diag)
        }
        MessagePassingPlan::NonlinearNormalized { .. } => unreachable!("rejected as nonlinear"),
    }
}
