use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NormMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Metapath,
    HopAveraged,
    NonlinearNormalized,
}

impl OperatorKind {
    pub fn is_linear(self) -> bool {
        !matches!(self, OperatorKind::NonlinearNormalized)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Metapath => "metapath",
            OperatorKind::HopAveraged => "hop-averaged",
            OperatorKind::NonlinearNormalized => "nonlinear-normalized",
        }
    }
}

impl std::str::FromStr for OperatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "metapath" => Ok(OperatorKind::Metapath),
            "hop-averaged" | "hop" => Ok(OperatorKind::HopAveraged),
            "nonlinear-normalized" | "nonlinear" => Ok(OperatorKind::NonlinearNormalized),
            other => Err(format!("unknown operator kind {other}")),
        }
    }
}

/// One message passing operator over the whole graph, mapping values on
/// target nodes to values on target nodes.
///
/// * `Metapath`: relations listed along the walk from the receiving target
///   node. `["written_by", "writes"]` means paper -> author -> paper. The
///   relation closest to the input is applied first.
/// * `HopAveraged`: each hop, every node type takes the mean over all of its
///   outgoing relations of the aggregated neighbor state.
/// * `NonlinearNormalized`: hop-averaged, with row L2 normalization of every
///   intermediate state between hops.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MessagePassingPlan {
    Metapath { relations: Vec<String>, norm: NormMode },
    HopAveraged { hops: usize, norm: NormMode },
    NonlinearNormalized { hops: usize, norm: NormMode },
}

impl MessagePassingPlan {
    pub fn metapath<S: AsRef<str>>(relations: &[S], norm: NormMode) -> Self {
        MessagePassingPlan::Metapath {
            relations: relations.iter().map(|s| s.as_ref().to_string()).collect(),
            norm,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            MessagePassingPlan::Metapath { .. } => OperatorKind::Metapath,
            MessagePassingPlan::HopAveraged { .. } => OperatorKind::HopAveraged,
            MessagePassingPlan::NonlinearNormalized { .. } => OperatorKind::NonlinearNormalized,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.kind().is_linear()
    }

    pub fn norm(&self) -> NormMode {
        match self {
            MessagePassingPlan::Metapath { norm, .. }
            | MessagePassingPlan::HopAveraged { norm, .. }
            | MessagePassingPlan::NonlinearNormalized { norm, .. } => *norm,
        }
    }

    /// Number of adjacency factors in the operator.
    pub fn hops(&self) -> usize {
        match self {
            MessagePassingPlan::Metapath { relations, .. } => relations.len(),
            MessagePassingPlan::HopAveraged { hops, .. } | MessagePassingPlan::NonlinearNormalized { hops, .. } => {
                *hops
            }
        }
    }

    /// The plan with inter-hop normalization removed; linear plans are
    /// returned unchanged.
    pub fn linear_skeleton(&self) -> MessagePassingPlan {
        match self {
            MessagePassingPlan::NonlinearNormalized { hops, norm } => MessagePassingPlan::HopAveraged {
                hops: *hops,
                norm: *norm,
            },
            other => other.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MessagePassingPlan::Metapath { relations, .. } => format!("metapath[{}]", relations.join(",")),
            MessagePassingPlan::HopAveraged { hops, .. } => format!("hop-averaged[{hops}]"),
            MessagePassingPlan::NonlinearNormalized { hops, .. } => format!("nonlinear-normalized[{hops}]"),
        }
    }

    /// Checks the plan against a graph and returns relation ids for metapaths.
    pub fn validate(&self, graph: &HeteroGraph) -> Result<Vec<usize>> {
        if self.hops() == 0 {
            return Err(Error::Plan(format!(
                "{}: at least one hop is required",
                self.describe()
            )));
        }
        let MessagePassingPlan::Metapath { relations, .. } = self else {
            return Ok(Vec::new());
        };
        let mut ids = Vec::with_capacity(relations.len());
        let mut at = graph.target_type();
        for name in relations {
            let id = graph
                .relation_id(name)
                .ok_or_else(|| Error::Plan(format!("unknown relation {name}")))?;
            let rel = &graph.relations()[id];
            if rel.src_type != at {
                return Err(Error::Plan(format!(
                    "type chain broken at {name}: expected source {}, relation starts at {}",
                    graph.node_types()[at].name,
                    graph.node_types()[rel.src_type].name
                )));
            }
            at = rel.dst_type;
            ids.push(id);
        }
        if at != graph.target_type() {
            return Err(Error::Plan(format!(
                "metapath ends at {}, not the target type {}",
                graph.node_types()[at].name,
                graph.target_name()
            )));
        }
        Ok(ids)
    }
}

/// A family of operators indexed by hop parameter `k = 1..K`. Label and
/// feature pre-computation draw their plans from the same family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlanFamily {
    /// Plan `k` walks the base target-to-target metapath `k` times.
    Metapath {
        base: Vec<String>,
    },
    HopAveraged,
    NonlinearNormalized,
}

impl PlanFamily {
    pub fn kind(&self) -> OperatorKind {
        match self {
            PlanFamily::Metapath { .. } => OperatorKind::Metapath,
            PlanFamily::HopAveraged => OperatorKind::HopAveraged,
            PlanFamily::NonlinearNormalized => OperatorKind::NonlinearNormalized,
        }
    }

    pub fn plan(&self, k: usize, norm: NormMode) -> MessagePassingPlan {
        match self {
            PlanFamily::Metapath { base } => MessagePassingPlan::Metapath {
                relations: base.iter().cycle().take(base.len() * k).cloned().collect(),
                norm,
            },
            PlanFamily::HopAveraged => MessagePassingPlan::HopAveraged { hops: k, norm },
            PlanFamily::NonlinearNormalized => MessagePassingPlan::NonlinearNormalized { hops: k, norm },
        }
    }

    pub fn plans(&self, max_k: usize, norm: NormMode) -> Vec<MessagePassingPlan> {
        (1..=max_k).map(|k| self.plan(k, norm)).collect()
    }
}
