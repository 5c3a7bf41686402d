//! Partition-masked propagation, retention rescaling and merge.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partition::{make_partitioning, Partitioning, Scheme};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::labels::{AugmentedLabelMatrix, LabelMatrix, SplitAssignment};
use crate::matrix::Matrix;
use crate::propagation::{propagate, MessagePassingPlan, PropagatedTensor};

pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcholessConfig {
    /// Number of training partitions `M`.
    pub partitions: usize,
    pub scheme: Scheme,
    pub post_adjust: bool,
    pub seed: u64,
    /// Rows whose retention is at or below this are zeroed by the rescaling.
    pub eps: f64,
    /// Run per-partition passes on the rayon pool.
    pub parallel: bool,
}

impl Default for EcholessConfig {
    fn default() -> Self {
        Self {
            partitions: 2,
            scheme: Scheme::Aps,
            post_adjust: true,
            seed: 0,
            eps: DEFAULT_EPS,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcholessOutput {
    /// `N x (C + 1)`, retention in column 0.
    pub tensor: PropagatedTensor,
    /// Message passing calls made.
    pub passes: usize,
    /// Rows zeroed by rescaling because their retention was at or below eps.
    pub zeroed_rows: usize,
}

/// Propagates `Ybar` with the rows of partition `i` masked to zero. The
/// operator itself is untouched.
pub fn pfep(
    plan: &MessagePassingPlan,
    graph: &HeteroGraph,
    ybar: &AugmentedLabelMatrix,
    part: &Partitioning,
    i: usize,
) -> Result<PropagatedTensor> {
    if i >= part.num_partitions() {
        return Err(Error::Partition(format!(
            "partition {i} out of range ({} partitions)",
            part.num_partitions()
        )));
    }
    let masked = ybar.masked(&part.mask(i));
    let h = propagate_augmented(plan, &masked, graph).map_err(|e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("partition {i} pass of {}: {msg}", plan.describe())),
        other => other,
    })?;
    Ok(PropagatedTensor::new(h, true))
}

/// Propagates `[indicator | labels]`. Linear plans act column by column, so
/// one call suffices. Otherwise row normalization would mix label mass into
/// the indicator column; the labels then go through the plan and the
/// indicator through its linear skeleton, keeping retention independent of
/// every label.
fn propagate_augmented(plan: &MessagePassingPlan, masked: &Matrix, graph: &HeteroGraph) -> Result<Matrix> {
    if plan.is_linear() {
        return propagate(plan, masked, graph);
    }
    let width = masked.cols();
    let labels = propagate(plan, &masked.columns(1, width), graph)?;
    let retention = propagate(&plan.linear_skeleton(), &masked.columns(0, 1), graph)?;
    let mut out = Matrix::zeros(masked.rows(), width);
    for v in 0..masked.rows() {
        let row = out.row_mut(v);
        row[0] = retention.get(v, 0);
        row[1..].copy_from_slice(labels.row(v));
    }
    Ok(out)
}

/// Merged retention: each node's retention from its own partition's pass.
pub fn merged_retention(parts: &[PropagatedTensor], part: &Partitioning) -> Result<Vec<f64>> {
    check_parts(parts, part)?;
    Ok((0..part.num_nodes())
        .map(|v| parts[part.partition_of(v)].values().get(v, 0))
        .collect())
}

/// Rescales label columns row-wise by `max(r) / r_i`. Rows with `r_i <= eps`
/// become zero and are counted. Returns the adjusted tensor and that count.
pub fn post_adjust(h: &PropagatedTensor, merged_r: &[f64], eps: f64) -> Result<(PropagatedTensor, usize)> {
    if !h.has_retention() {
        return Err(Error::Shape("rescaling needs a retention column".into()));
    }
    let max_r = max_retention(merged_r, eps)?;
    let mut values = h.values().clone();
    let zeroed = rescale_rows(&mut values, max_r, eps);
    Ok((PropagatedTensor::new(values, true), zeroed))
}

fn max_retention(merged_r: &[f64], eps: f64) -> Result<f64> {
    if merged_r.iter().any(|r| !r.is_finite()) {
        return Err(Error::Numeric("merged retention has a non-finite entry".into()));
    }
    let max_r = merged_r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_r.is_nan() || max_r <= eps {
        return Err(Error::Degenerate(format!(
            "maximum retention {max_r} <= {eps}: no label mass reached any node"
        )));
    }
    Ok(max_r)
}

fn rescale_rows(values: &mut Matrix, max_r: f64, eps: f64) -> usize {
    let mut zeroed = 0;
    for v in 0..values.rows() {
        let row = values.row_mut(v);
        let r = row[0];
        if r <= eps {
            row.fill(0.0);
            zeroed += 1;
        } else {
            let scale = max_r / r;
            row[1..].iter_mut().for_each(|x| *x *= scale);
            row[0] = max_r;
        }
    }
    zeroed
}

fn check_parts(parts: &[PropagatedTensor], part: &Partitioning) -> Result<()> {
    if parts.len() != part.num_partitions() {
        return Err(Error::Shape(format!(
            "{} tensors for {} partitions",
            parts.len(),
            part.num_partitions()
        )));
    }
    let shape = parts[0].shape();
    if parts
        .iter()
        .any(|p| p.shape() != shape || p.has_retention() != parts[0].has_retention())
    {
        return Err(Error::Shape("partition tensors differ in shape".into()));
    }
    if shape.0 != part.num_nodes() {
        return Err(Error::Shape(format!(
            "tensors have {} rows, partitioning covers {} nodes",
            shape.0,
            part.num_nodes()
        )));
    }
    Ok(())
}

/// `sum_i diag(M_i) H_i`: row `v` is taken from its own partition's tensor.
pub fn merge(parts: &[PropagatedTensor], part: &Partitioning) -> Result<PropagatedTensor> {
    check_parts(parts, part)?;
    let (n, c) = parts[0].shape();
    let mut out = Matrix::zeros(n, c);
    for v in 0..n {
        out.row_mut(v).copy_from_slice(parts[part.partition_of(v)].row(v));
    }
    Ok(PropagatedTensor::new(out, parts[0].has_retention()))
}

/// Partition, masked pass per partition, optional rescaling, merge.
///
/// Each pass only contributes the rows of its own partition, so the merged
/// buffer is filled as passes complete and no full per-partition tensor is
/// retained. Empty partitions are skipped.
pub fn echoless_lp(
    plan: &MessagePassingPlan,
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    split: &SplitAssignment,
    cfg: &EcholessConfig,
) -> Result<EcholessOutput> {
    let part = make_partitioning(split, cfg.scheme, cfg.partitions, cfg.seed)?;
    echoless_with_partitioning(plan, graph, labels, split, &part, cfg)
}

pub fn echoless_with_partitioning(
    plan: &MessagePassingPlan,
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    split: &SplitAssignment,
    part: &Partitioning,
    cfg: &EcholessConfig,
) -> Result<EcholessOutput> {
    plan.validate(graph)?;
    let ybar = AugmentedLabelMatrix::new(labels, split)?;
    let n = ybar.matrix().rows();
    if part.num_nodes() != n {
        return Err(Error::Shape(format!(
            "partitioning covers {} nodes, labels {n}",
            part.num_nodes()
        )));
    }
    let width = ybar.matrix().cols();
    let groups: Vec<Vec<usize>> = (0..part.num_partitions())
        .map(|i| part.members(i))
        .filter(|m| !m.is_empty())
        .collect();

    let run = |members: &Vec<usize>| -> Result<Matrix> {
        let h = pfep(plan, graph, &ybar, part, part.partition_of(members[0]))?;
        let mut rows = Matrix::zeros(members.len(), width);
        for (k, &v) in members.iter().enumerate() {
            rows.row_mut(k).copy_from_slice(h.row(v));
        }
        Ok(rows)
    };
    let blocks: Vec<Matrix> = if cfg.parallel {
        groups.par_iter().map(run).collect::<Result<_>>()?
    } else {
        groups.iter().map(run).collect::<Result<_>>()?
    };

    let mut merged = Matrix::zeros(n, width);
    for (members, block) in groups.iter().zip(&blocks) {
        for (k, &v) in members.iter().enumerate() {
            merged.row_mut(v).copy_from_slice(block.row(k));
        }
    }

    let mut zeroed_rows = 0;
    if cfg.post_adjust {
        let r = merged.column(0);
        let max_r = max_retention(&r, cfg.eps)?;
        zeroed_rows = rescale_rows(&mut merged, max_r, cfg.eps);
    }
    Ok(EcholessOutput {
        tensor: PropagatedTensor::new(merged, true),
        passes: groups.len(),
        zeroed_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{homogeneous, NormMode};
    use crate::labels::{GroundTruth, Split};

    fn path_all_train() -> (HeteroGraph, LabelMatrix, SplitAssignment) {
        let g = homogeneous(3, &[(0, 1), (1, 2)]).unwrap();
        let split = SplitAssignment::new(vec![Split::Train; 3]);
        let truth = GroundTruth::new(vec![Some(0), Some(1), Some(0)], 2).unwrap();
        let y = LabelMatrix::from_truth(&truth, &split).unwrap();
        (g, y, split)
    }

    fn two_hop() -> MessagePassingPlan {
        MessagePassingPlan::metapath(&["rel", "rel"], NormMode::RowStochastic)
    }

    #[test]
    fn singleton_partition_removes_own_echo() {
        let (g, y, split) = path_all_train();
        let part = make_partitioning(&split, Scheme::Aps, 3, 0).unwrap();
        let ybar = AugmentedLabelMatrix::new(&y, &split).unwrap();
        let i = part.partition_of(0);
        let h = pfep(&two_hop(), &g, &ybar, &part, i).unwrap();
        // A^2 row 0 = [.5, 0, .5]; masking node 0 leaves 0.5 * Y[2] = [.5, 0].
        assert_eq!(h.row(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn unlabeled_pass_is_unmasked() {
        let g = homogeneous(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let split = SplitAssignment::new(vec![Split::Train, Split::Test, Split::Train, Split::Valid]);
        let truth = GroundTruth::new(vec![Some(0), Some(1), Some(1), Some(0)], 2).unwrap();
        let y = LabelMatrix::from_truth(&truth, &split).unwrap();
        let part = make_partitioning(&split, Scheme::Aps, 2, 3).unwrap();
        let ybar = AugmentedLabelMatrix::new(&y, &split).unwrap();
        let h = pfep(&two_hop(), &g, &ybar, &part, 2).unwrap();
        let full = propagate(&two_hop(), ybar.matrix(), &g).unwrap();
        assert_eq!(h.values(), &full);
    }

    #[test]
    fn mask_everything_gives_zero() {
        let (g, y, split) = path_all_train();
        let part = make_partitioning(&split, Scheme::Uniform, 1, 0).unwrap();
        let ybar = AugmentedLabelMatrix::new(&y, &split).unwrap();
        let h = pfep(&two_hop(), &g, &ybar, &part, 0).unwrap();
        assert!(h.values().data().iter().all(|&x| x == 0.0));
        assert!(pfep(&two_hop(), &g, &ybar, &part, 1).is_err());
    }

    #[test]
    fn post_adjust_cases() {
        let h = PropagatedTensor::new(Matrix::from_rows(&[vec![0.5, 0.2, 0.3], vec![1.0, 0.4, 0.6]]), true);
        let (adj, zeroed) = post_adjust(&h, &[0.5, 1.0], DEFAULT_EPS).unwrap();
        assert_eq!(zeroed, 0);
        assert_eq!(adj.row(0), &[1.0, 0.4, 0.6]);
        assert_eq!(adj.row(1), &[1.0, 0.4, 0.6]);

        let uniform = PropagatedTensor::new(Matrix::from_rows(&[vec![0.7, 0.1, 0.6], vec![0.7, 0.3, 0.4]]), true);
        let (same, _) = post_adjust(&uniform, &[0.7, 0.7], DEFAULT_EPS).unwrap();
        assert_eq!(same, uniform);

        let with_zero = PropagatedTensor::new(Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![1.0, 0.5, 0.5]]), true);
        let (out, zeroed) = post_adjust(&with_zero, &[0.0, 1.0], DEFAULT_EPS).unwrap();
        assert_eq!(zeroed, 1);
        assert_eq!(out.row(0), &[0.0, 0.0, 0.0]);

        assert!(matches!(
            post_adjust(&with_zero, &[0.0, 0.0], DEFAULT_EPS),
            Err(Error::Degenerate(_))
        ));
        let bare = PropagatedTensor::without_retention(Matrix::zeros(2, 2));
        assert!(post_adjust(&bare, &[1.0, 1.0], DEFAULT_EPS).is_err());
    }

    #[test]
    fn merge_selects_own_partition_rows() {
        let split = SplitAssignment::new(vec![Split::Train, Split::Train, Split::Test]);
        let part = make_partitioning(&split, Scheme::Aps, 2, 9).unwrap();
        let parts: Vec<PropagatedTensor> = (0..3)
            .map(|i| PropagatedTensor::new(Matrix::from_vec(3, 2, vec![i as f64; 6]), true))
            .collect();
        let merged = merge(&parts, &part).unwrap();
        for v in 0..3 {
            let p = part.partition_of(v);
            assert_eq!(merged.row(v), parts[p].row(v));
        }
        assert!(merge(&parts[..2], &part).is_err());
        let single = make_partitioning(&split, Scheme::Uniform, 1, 0).unwrap();
        assert_eq!(merge(&parts[..1], &single).unwrap(), parts[0]);
    }

    #[test]
    fn nonlinear_retention_ignores_labels() {
        let g = homogeneous(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]).unwrap();
        use Split::*;
        let split = SplitAssignment::new(vec![Train, Train, Train, Test, Train]);
        let classes = |c: [usize; 5]| GroundTruth::new(c.iter().map(|&x| Some(x)).collect(), 3).unwrap();
        let plan = MessagePassingPlan::NonlinearNormalized {
            hops: 3,
            norm: NormMode::RowStochastic,
        };
        let cfg = EcholessConfig::default();
        let ret = |t: &GroundTruth| {
            let y = LabelMatrix::from_truth(t, &split).unwrap();
            echoless_lp(
                &plan,
                &g,
                &y,
                &split,
                &EcholessConfig {
                    post_adjust: false,
                    ..cfg.clone()
                },
            )
            .unwrap()
            .tensor
            .retention()
            .unwrap()
        };
        assert_eq!(ret(&classes([0, 1, 2, 0, 1])), ret(&classes([2, 2, 0, 1, 0])));
    }

    #[test]
    fn streaming_route_matches_composed_route() {
        let g = homogeneous(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
        use Split::*;
        let split = SplitAssignment::new(vec![Train, Train, Valid, Train, Test, Train]);
        let truth = GroundTruth::new(vec![Some(0), Some(1), Some(2), Some(2), Some(0), Some(1)], 3).unwrap();
        let y = LabelMatrix::from_truth(&truth, &split).unwrap();
        let cfg = EcholessConfig {
            partitions: 2,
            seed: 5,
            ..Default::default()
        };
        let plan = MessagePassingPlan::metapath(&["rel", "rel", "rel"], NormMode::RowStochastic);
        let out = echoless_lp(&plan, &g, &y, &split, &cfg).unwrap();
        assert_eq!(out.passes, 3);

        let part = make_partitioning(&split, cfg.scheme, cfg.partitions, cfg.seed).unwrap();
        let ybar = AugmentedLabelMatrix::new(&y, &split).unwrap();
        let hs: Vec<_> = (0..part.num_partitions())
            .map(|i| pfep(&plan, &g, &ybar, &part, i).unwrap())
            .collect();
        let r = merged_retention(&hs, &part).unwrap();
        let adjusted: Vec<_> = hs.iter().map(|h| post_adjust(h, &r, cfg.eps).unwrap().0).collect();
        let composed = merge(&adjusted, &part).unwrap();
        let bits = |t: &PropagatedTensor| t.values().data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&out.tensor), bits(&composed));

        let seq = echoless_lp(&plan, &g, &y, &split, &EcholessConfig { parallel: false, ..cfg }).unwrap();
        assert_eq!(bits(&seq.tensor), bits(&out.tensor));
    }
}
