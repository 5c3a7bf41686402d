//! Train/test accuracy gap on graphs whose labels carry no structural signal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{evaluate, train_encoder, EncoderConfig, InputBlock};
use crate::error::Result;
use crate::graph::{gen_synthetic, HeteroGraph, SyntheticDataset, SyntheticSpec};
use crate::labels::{GroundTruth, LabelMatrix, Split, SplitAssignment};
use crate::precompute::{run_strategy, Strategy};
use crate::propagation::{MessagePassingPlan, PlanFamily};

/// Base metapath of [`random_label_fixture`]: paper, author, paper.
pub const FIXTURE_METAPATH: [&str; 2] = ["written_by", "writes"];

/// Papers in small author groups with uniformly random labels, so any
/// train accuracy above chance comes from a node's own label.
pub fn random_label_fixture(num_papers: usize, num_classes: usize, seed: u64) -> Result<SyntheticDataset> {
    gen_synthetic(&SyntheticSpec::clustered(num_papers, num_classes, 0.5, 2.0), seed)
}

/// Encoder settings used with [`random_label_fixture`].
pub fn fixture_encoder() -> EncoderConfig {
    EncoderConfig {
        learning_rate: 0.1,
        epochs: 50,
        ..Default::default()
    }
}

pub fn fixture_family() -> PlanFamily {
    PlanFamily::Metapath {
        base: FIXTURE_METAPATH.iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyGap {
    pub strategy: String,
    pub chance: f64,
    pub train_acc_mean: f64,
    pub train_acc_std: f64,
    pub test_acc_mean: f64,
    pub test_acc_std: f64,
    /// Mean train accuracy minus chance.
    pub gap: f64,
    pub runs: Vec<SeedRun>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn with_seed(strategy: &Strategy, seed: u64) -> Strategy {
    match strategy {
        Strategy::Echoless(cfg) => Strategy::Echoless(crate::precompute::EcholessConfig {
            seed,
            parallel: false,
            ..cfg.clone()
        }),
        other => other.clone(),
    }
}

/// Pre-computes, trains and evaluates every strategy once per seed. The
/// seed drives both partitioning and the encoder.
pub fn leakage_gap_experiment(
    graph: &HeteroGraph,
    truth: &GroundTruth,
    split: &SplitAssignment,
    plans: &[MessagePassingPlan],
    strategies: &[Strategy],
    seeds: &[u64],
    encoder: &EncoderConfig,
) -> Result<Vec<StrategyGap>> {
    let labels = LabelMatrix::from_truth(truth, split)?;
    let chance = 1.0 / truth.num_classes as f64;
    strategies
        .iter()
        .map(|strategy| {
            let runs: Vec<SeedRun> = seeds
                .par_iter()
                .map(|&seed| {
                    let outputs = run_strategy(&with_seed(strategy, seed), plans, graph, &labels, split)?;
                    let blocks: Vec<InputBlock> = outputs.iter().map(|h| InputBlock::label(&h.tensor)).collect();
                    let cfg = EncoderConfig {
                        seed,
                        ..encoder.clone()
                    };
                    let (model, _) = train_encoder(&blocks, truth, split, &cfg)?;
                    Ok(SeedRun {
                        seed,
                        train_acc: evaluate(&model, &blocks, truth, split, Split::Train)?.accuracy,
                        test_acc: evaluate(&model, &blocks, truth, split, Split::Test)?.accuracy,
                    })
                })
                .collect::<Result<_>>()?;
            let (train_acc_mean, train_acc_std) = mean_std(&runs.iter().map(|r| r.train_acc).collect::<Vec<_>>());
            let (test_acc_mean, test_acc_std) = mean_std(&runs.iter().map(|r| r.test_acc).collect::<Vec<_>>());
            Ok(StrategyGap {
                strategy: strategy.name().to_string(),
                chance,
                train_acc_mean,
                train_acc_std,
                test_acc_mean,
                test_acc_std,
                gap: train_acc_mean - chance,
                runs,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NormMode;
    use crate::precompute::EcholessConfig;

    #[test]
    fn plain_overfits_echoless_does_not() {
        let data = random_label_fixture(600, 4, 1).unwrap();
        let plans = fixture_family().plans(2, NormMode::RowStochastic);
        let strategies = [Strategy::Plain, Strategy::Echoless(EcholessConfig::default())];
        let res = leakage_gap_experiment(
            &data.graph,
            &data.truth,
            &data.split,
            &plans,
            &strategies,
            &[0, 1],
            &fixture_encoder(),
        )
        .unwrap();
        assert!(res[0].train_acc_mean > res[1].train_acc_mean + 0.15, "{res:?}");
        assert_eq!(res[0].runs.len(), 2);
    }
}
