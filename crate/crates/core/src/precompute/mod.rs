//! Label pre-computation strategies over a family of plans.

mod baselines;
mod echoless;
mod partition;

pub use baselines::{check_remove_diag, last_residual_lp, plain_lp, remove_diag_lp};
pub use echoless::{
    echoless_lp, echoless_with_partitioning, merge, merged_retention, pfep, post_adjust, EcholessConfig,
    EcholessOutput, DEFAULT_EPS,
};
pub use partition::{make_partitioning, Partitioning, Scheme};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::HeteroGraph;
use crate::labels::{LabelMatrix, SplitAssignment};
use crate::propagation::{MessagePassingPlan, PropagatedTensor};

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Plain,
    /// Drops hops below `k_min`.
    LastResidual {
        k_min: usize,
    },
    RemoveDiag {
        mem_cap: u64,
    },
    Echoless(EcholessConfig),
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Plain => StrategyKind::Plain,
            Strategy::LastResidual { .. } => StrategyKind::LastResidual,
            Strategy::RemoveDiag { .. } => StrategyKind::RemoveDiag,
            Strategy::Echoless(_) => StrategyKind::Echoless,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().as_str()
    }
}

/// Strategy name without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Echoless,
    LastResidual,
    Plain,
    RemoveDiag,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Echoless => "echoless",
            StrategyKind::LastResidual => "last-residual",
            StrategyKind::Plain => "plain",
            StrategyKind::RemoveDiag => "remove-diag",
        }
    }

    /// `k_min` applies to last-residual, `mem_cap` to remove-diag, the
    /// echoless settings to echoless.
    pub fn with_params(self, k_min: usize, mem_cap: u64, echoless: &EcholessConfig) -> Strategy {
        match self {
            StrategyKind::Echoless => Strategy::Echoless(echoless.clone()),
            StrategyKind::LastResidual => Strategy::LastResidual { k_min },
            StrategyKind::Plain => Strategy::Plain,
            StrategyKind::RemoveDiag => Strategy::RemoveDiag { mem_cap },
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "echoless" => Ok(StrategyKind::Echoless),
            "lastresidual" => Ok(StrategyKind::LastResidual),
            "plain" => Ok(StrategyKind::Plain),
            "removediag" => Ok(StrategyKind::RemoveDiag),
            _ => Err(format!(
                "unknown strategy {s} (expected plain, last-residual, remove-diag or echoless)"
            )),
        }
    }
}

/// One emitted tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct HopOutput {
    /// 1-based position of the plan in the family.
    pub hop: usize,
    pub tensor: PropagatedTensor,
    /// Message passing calls made for this tensor.
    pub passes: usize,
    pub zeroed_rows: usize,
}

/// Runs `strategy` for every plan (`plans[k - 1]` is hop `k`). Diagonal
/// removal checks every plan against the memory cap before computing any.
pub fn run_strategy(
    strategy: &Strategy,
    plans: &[MessagePassingPlan],
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    split: &SplitAssignment,
) -> Result<Vec<HopOutput>> {
    let plain = |hop: usize, tensor| HopOutput {
        hop,
        tensor,
        passes: 1,
        zeroed_rows: 0,
    };
    match strategy {
        Strategy::Plain => plans
            .iter()
            .enumerate()
            .map(|(i, p)| Ok(plain(i + 1, plain_lp(p, graph, labels)?)))
            .collect(),
        Strategy::LastResidual { k_min } => {
            let kept = last_residual_lp(plans, graph, labels, *k_min)?;
            Ok(kept.into_iter().enumerate().map(|(i, t)| plain(k_min + i, t)).collect())
        }
        Strategy::RemoveDiag { mem_cap } => {
            for p in plans {
                check_remove_diag(p, graph, *mem_cap)?;
            }
            plans
                .iter()
                .enumerate()
                .map(|(i, p)| Ok(plain(i + 1, remove_diag_lp(p, graph, labels, *mem_cap)?)))
                .collect()
        }
        Strategy::Echoless(cfg) => {
            let part = make_partitioning(split, cfg.scheme, cfg.partitions, cfg.seed)?;
            plans
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let out = echoless_with_partitioning(p, graph, labels, split, &part, cfg)?;
                    Ok(HopOutput {
                        hop: i + 1,
                        tensor: out.tensor,
                        passes: out.passes,
                        zeroed_rows: out.zeroed_rows,
                    })
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::graph::{homogeneous, NormMode};
    use crate::labels::{GroundTruth, Split};
    use crate::propagation::PlanFamily;

    fn fixture() -> (HeteroGraph, LabelMatrix, SplitAssignment) {
        let g = homogeneous(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        use Split::*;
        let split = SplitAssignment::new(vec![Train, Train, Test, Train, Valid]);
        let truth = GroundTruth::new(vec![Some(0), Some(1), Some(0), Some(1), Some(0)], 2).unwrap();
        let y = LabelMatrix::from_truth(&truth, &split).unwrap();
        (g, y, split)
    }

    #[test]
    fn hop_numbering_and_shapes() {
        let (g, y, split) = fixture();
        let plans = PlanFamily::HopAveraged.plans(3, NormMode::RowStochastic);
        let plain = run_strategy(&Strategy::Plain, &plans, &g, &y, &split).unwrap();
        assert_eq!(plain.iter().map(|h| h.hop).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(plain[0].tensor.shape(), (5, 2));
        let lr = run_strategy(&Strategy::LastResidual { k_min: 2 }, &plans, &g, &y, &split).unwrap();
        assert_eq!(lr.iter().map(|h| h.hop).collect::<Vec<_>>(), vec![2, 3]);
        let el = run_strategy(&Strategy::Echoless(EcholessConfig::default()), &plans, &g, &y, &split).unwrap();
        assert_eq!(el[2].tensor.shape(), (5, 3));
        assert_eq!(el[0].passes, 3);
    }

    #[test]
    fn strategy_names_parse() {
        for k in [
            StrategyKind::Plain,
            StrategyKind::LastResidual,
            StrategyKind::RemoveDiag,
            StrategyKind::Echoless,
        ] {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("removediag".parse::<StrategyKind>().unwrap(), StrategyKind::RemoveDiag);
        assert!("lp".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn remove_diag_guard_precedes_any_output() {
        let (g, y, split) = fixture();
        let plans = PlanFamily::HopAveraged.plans(3, NormMode::RowStochastic);
        let err = run_strategy(&Strategy::RemoveDiag { mem_cap: 100 }, &plans, &g, &y, &split).unwrap_err();
        assert!(matches!(
            err,
            Error::MemoryGuard {
                estimate_bytes: 200,
                ..
            }
        ));
    }
}
