//! JSON run configuration.
//!
//! Every field is optional in the file; command-line flags override file
//! values. Defaults:
//!
//! | field          | default        |
//! |----------------|----------------|
//! | `strategy`     | `echoless`     |
//! | `hops`         | 3              |
//! | `operator`     | `hop-averaged` |
//! | `metapath`     | empty          |
//! | `norm`         | `row-stochastic` |
//! | `partitions`   | 2              |
//! | `scheme`       | `aps`          |
//! | `post_adjust`  | true           |
//! | `seed`         | 0              |
//! | `mem_cap`      | `8GB`          |
//! | `k_min`        | `hops`         |
//! | `dtype`        | `f64`          |
//!
//! `mem_cap` accepts a byte count or a string with a `B`, `KB`, `MB`, `GB`,
//! `TB` (powers of 1000) or `KiB`, `MiB`, `GiB`, `TiB` (powers of 1024)
//! suffix.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::graph::{load_graph, load_labels, load_splits, HeteroGraph, NormMode};
use crate::labels::{GroundTruth, LabelMatrix, SplitAssignment};
use crate::precompute::{EcholessConfig, Scheme, Strategy, StrategyKind, DEFAULT_EPS};
use crate::propagation::{Dtype, MessagePassingPlan, OperatorKind, PlanFamily};

pub const DEFAULT_MEM_CAP: u64 = 8_000_000_000;

pub fn parse_mem_cap(s: &str) -> Result<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let mult: f64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1.0,
        "kb" | "k" => 1e3,
        "mb" | "m" => 1e6,
        "gb" | "g" => 1e9,
        "tb" | "t" => 1e12,
        "kib" => 1024.0,
        "mib" => 1024f64.powi(2),
        "gib" => 1024f64.powi(3),
        "tib" => 1024f64.powi(4),
        other => return Err(Error::Config(format!("unknown memory unit {other:?} in {s:?}"))),
    };
    let value: f64 = num
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse memory size {s:?}")))?;
    let bytes = value * mult;
    if !(bytes >= 1.0 && bytes < u64::MAX as f64) {
        return Err(Error::Config(format!(
            "memory cap {s:?} must be between 1 byte and 2^64"
        )));
    }
    Ok(bytes.round() as u64)
}

fn de_mem_cap<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bytes(u64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Bytes(b)) => Ok(Some(b)),
        Some(Raw::Text(t)) => parse_mem_cap(&t).map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub target: Option<String>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub num_classes: Option<usize>,
    pub strategy: Option<StrategyKind>,
    pub hops: Option<usize>,
    pub operator: Option<OperatorKind>,
    pub metapath: Option<Vec<String>>,
    pub norm: Option<NormMode>,
    pub partitions: Option<usize>,
    pub scheme: Option<Scheme>,
    pub post_adjust: Option<bool>,
    pub seed: Option<u64>,
    #[serde(deserialize_with = "de_mem_cap")]
    pub mem_cap: Option<u64>,
    pub k_min: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dtype: Option<Dtype>,
}

macro_rules! overlay {
    ($base:ident, $over:ident, $($f:ident),*) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f; } )*
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RunConfig) -> Self {
        overlay!(
            self,
            over,
            nodes,
            edges,
            target,
            labels,
            splits,
            num_classes,
            strategy,
            hops,
            operator,
            metapath,
            norm,
            partitions,
            scheme,
            post_adjust,
            seed,
            mem_cap,
            k_min,
            out_dir,
            dtype
        );
        self
    }

    pub fn strategy_kind(&self) -> StrategyKind {
        self.strategy.unwrap_or(StrategyKind::Echoless)
    }

    pub fn k(&self) -> usize {
        self.hops.unwrap_or(3)
    }

    pub fn mem_cap_bytes(&self) -> u64 {
        self.mem_cap.unwrap_or(DEFAULT_MEM_CAP)
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm.unwrap_or_default()
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::Config("hops must be at least 1".into()));
        }
        if self.partitions == Some(0) {
            return Err(Error::Config("partitions must be at least 1".into()));
        }
        if self.mem_cap == Some(0) {
            return Err(Error::Config("mem_cap must be positive".into()));
        }
        if let Some(k_min) = self.k_min {
            if k_min == 0 || k_min > self.k() {
                return Err(Error::Config(format!("k_min {k_min} outside 1..={}", self.k())));
            }
        }
        if self.operator.unwrap_or(OperatorKind::HopAveraged) == OperatorKind::Metapath
            && self.metapath.as_ref().is_none_or(|m| m.is_empty())
        {
            return Err(Error::Config("metapath operator needs a non-empty metapath".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> PlanFamily {
        match self.operator.unwrap_or(OperatorKind::HopAveraged) {
            OperatorKind::Metapath => PlanFamily::Metapath {
                base: self.metapath.clone().unwrap_or_default(),
            },
            OperatorKind::HopAveraged => PlanFamily::HopAveraged,
            OperatorKind::NonlinearNormalized => PlanFamily::NonlinearNormalized,
        }
    }

    pub fn plans(&self) -> Vec<MessagePassingPlan> {
        self.family().plans(self.k(), self.norm_mode())
    }

    pub fn echoless(&self) -> EcholessConfig {
        EcholessConfig {
            partitions: self.partitions.unwrap_or(2),
            scheme: self.scheme.unwrap_or_default(),
            post_adjust: self.post_adjust.unwrap_or(true),
            seed: self.seed.unwrap_or(0),
            eps: DEFAULT_EPS,
            parallel: true,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy_kind()
            .with_params(self.k_min.unwrap_or(self.k()), self.mem_cap_bytes(), &self.echoless())
    }

    pub fn load_inputs(&self) -> Result<Inputs> {
        let nodes = required_file(&self.nodes, "nodes")?;
        let edges = required_file(&self.edges, "edges")?;
        let labels = required_file(&self.labels, "labels")?;
        let splits = required_file(&self.splits, "splits")?;
        let target = self
            .target
            .as_deref()
            .ok_or_else(|| Error::Config("missing target node type".into()))?;
        let graph = load_graph(nodes, edges, target)?;
        let n = graph.num_targets();
        let truth = load_labels(labels, n, self.num_classes)?;
        let split = load_splits(splits, n)?;
        let labels = LabelMatrix::from_truth(&truth, &split)?;
        Ok(Inputs {
            graph,
            truth,
            split,
            labels,
        })
    }
}

/// Loaded graph, labels and split.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub graph: HeteroGraph,
    pub truth: GroundTruth,
    pub split: SplitAssignment,
    pub labels: LabelMatrix,
}

/// Missing inputs are configuration errors naming the path.
pub fn required_file<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let path = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("missing {what} file")))?;
    existing_file(path, what)?;
    Ok(path)
}

pub fn existing_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!("{what} file {} does not exist", path.display())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_cap_units() {
        assert_eq!(parse_mem_cap("128GB").unwrap(), 128_000_000_000);
        assert_eq!(parse_mem_cap("1GiB").unwrap(), 1 << 30);
        assert_eq!(parse_mem_cap("1.5 MB").unwrap(), 1_500_000);
        assert_eq!(parse_mem_cap("4096").unwrap(), 4096);
        assert!(parse_mem_cap("0GB").is_err());
        assert!(parse_mem_cap("12XB").is_err());
        assert!(parse_mem_cap("GB").is_err());
    }

    #[test]
    fn json_and_overlay() {
        let file: RunConfig = serde_json::from_str(
            r#"{"strategy": "remove-diag", "hops": 2, "mem_cap": "1GB", "operator": "metapath",
                "metapath": ["a", "b"], "norm": "symmetric"}"#,
        )
        .unwrap();
        assert_eq!(file.mem_cap_bytes(), 1_000_000_000);
        let flags = RunConfig {
            hops: Some(4),
            ..Default::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.k(), 4);
        assert_eq!(merged.strategy(), Strategy::RemoveDiag { mem_cap: 1_000_000_000 });
        assert_eq!(merged.plans().len(), 4);
        assert_eq!(merged.plans()[1].hops(), 4);
        merged.validate().unwrap();

        let numeric: RunConfig = serde_json::from_str(r#"{"mem_cap": 5}"#).unwrap();
        assert_eq!(numeric.mem_cap, Some(5));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn invalid_values() {
        let bad = |c: RunConfig| assert!(matches!(c.validate(), Err(Error::Config(_))));
        bad(RunConfig {
            hops: Some(0),
            ..Default::default()
        });
        bad(RunConfig {
            partitions: Some(0),
            ..Default::default()
        });
        bad(RunConfig {
            mem_cap: Some(0),
            ..Default::default()
        });
        bad(RunConfig {
            operator: Some(OperatorKind::Metapath),
            ..Default::default()
        });
        bad(RunConfig {
            k_min: Some(5),
            ..Default::default()
        });
    }

    #[test]
    fn missing_file_names_path() {
        let c = RunConfig {
            nodes: Some("/no/such/nodes.tsv".into()),
            ..Default::default()
        };
        match c.load_inputs() {
            Err(Error::Config(msg)) => assert!(msg.contains("/no/such/nodes.tsv")),
            other => panic!("{other:?}"),
        }
    }
}
