//! Per-node leakage measurement and tensor equivalence checks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::labels::{LabelMatrix, SplitAssignment};
use crate::precompute::{run_strategy, HopOutput, Strategy};
use crate::propagation::{MessagePassingPlan, PropagatedTensor};

/// Largest target count accepted by [`measure_leakage`].
pub const MAX_LEAKAGE_NODES: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeakageMetric {
    #[default]
    MaxAbs,
    L2,
}

impl std::str::FromStr for LeakageMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "max-abs" | "maxabs" => Ok(LeakageMetric::MaxAbs),
            "l2" => Ok(LeakageMetric::L2),
            other => Err(format!("unknown leakage metric {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageConfig {
    /// A node leaks when its leakage is strictly above this.
    pub tolerance: f64,
    pub metric: LeakageMetric,
    pub per_node: bool,
}

impl Default for LeakageConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.0,
            metric: LeakageMetric::MaxAbs,
            per_node: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLeakage {
    pub node: usize,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub strategy: String,
    pub plan: String,
    pub tolerance: f64,
    pub metric: LeakageMetric,
    pub leaking_nodes: usize,
    pub max_leakage: f64,
    /// Training nodes checked.
    pub checked_nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_node: Option<Vec<NodeLeakage>>,
}

fn row_distance(a: &[f64], b: &[f64], metric: LeakageMetric) -> f64 {
    let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    match metric {
        LeakageMetric::MaxAbs => diffs.fold(0.0, f64::max),
        LeakageMetric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
    }
}

/// For each training node `v`, reruns the strategy with row `v` of `Y`
/// zeroed and compares output row `v` across every emitted tensor. The
/// largest difference over tensors is `L(v)`.
pub fn measure_leakage(
    strategy: &Strategy,
    plans: &[MessagePassingPlan],
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    split: &SplitAssignment,
    config: &LeakageConfig,
) -> Result<LeakageReport> {
    let n = graph.num_targets();
    if n > MAX_LEAKAGE_NODES {
        return Err(Error::Size(format!(
            "leakage measurement reruns the strategy per node; {n} targets exceeds {MAX_LEAKAGE_NODES}"
        )));
    }
    if config.tolerance.is_nan() || config.tolerance < 0.0 {
        return Err(Error::Config(format!("tolerance {} must be >= 0", config.tolerance)));
    }
    let base = run_strategy(strategy, plans, graph, labels, split)?;
    let train = split.train_nodes();
    let per: Vec<NodeLeakage> = train
        .par_iter()
        .map(|&v| {
            let perturbed = run_strategy(strategy, plans, graph, &labels.with_row_zeroed(v), split)?;
            Ok(NodeLeakage {
                node: v,
                leakage: node_leakage(&base, &perturbed, v, config.metric),
            })
        })
        .collect::<Result<_>>()?;

    let leaking_nodes = per.iter().filter(|l| l.leakage > config.tolerance).count();
    let max_leakage = per.iter().map(|l| l.leakage).fold(0.0, f64::max);
    Ok(LeakageReport {
        strategy: strategy.name().to_string(),
        plan: plans.iter().map(|p| p.describe()).collect::<Vec<_>>().join(";"),
        tolerance: config.tolerance,
        metric: config.metric,
        leaking_nodes,
        max_leakage,
        checked_nodes: per.len(),
        per_node: config.per_node.then_some(per),
    })
}

fn node_leakage(base: &[HopOutput], perturbed: &[HopOutput], v: usize, metric: LeakageMetric) -> f64 {
    base.iter()
        .zip(perturbed)
        .map(|(a, b)| row_distance(a.tensor.row(v), b.tensor.row(v), metric))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub max_abs_diff: f64,
    /// `(row, col)` of the largest difference, if any entry differs.
    pub location: Option<(usize, usize)>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn equivalence_check(a: &PropagatedTensor, b: &PropagatedTensor, tol: f64) -> Result<EquivalenceReport> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let cols = a.cols();
    let mut max_abs_diff = 0.0;
    let mut location = None;
    for (i, (x, y)) in a.values().data().iter().zip(b.values().data()).enumerate() {
        let d = (x - y).abs();
        // NaN differences count as infinitely large.
        let d = if d.is_nan() { f64::INFINITY } else { d };
        if d > max_abs_diff {
            max_abs_diff = d;
            location = Some((i / cols, i % cols));
        }
    }
    Ok(EquivalenceReport {
        max_abs_diff,
        location,
        tolerance: tol,
        pass: max_abs_diff <= tol,
    })
}
