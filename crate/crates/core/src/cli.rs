//! Command-line interface.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bench::{bench_sweep, plot_data, read_bench_csv, write_bench_csv, BenchConfig};
use crate::config::{existing_file, parse_mem_cap, required_file, RunConfig};
use crate::encoder::{evaluate, train_encoder, EncoderConfig, InputBlock, Metrics, TrainReport};
use crate::error::{Error, Result};
use crate::graph::{
    gen_synthetic, load_labels, load_splits, write_graph, write_labels, write_splits, NormMode, SyntheticSpec,
};
use crate::labels::Split;
use crate::precompute::{run_strategy, Scheme, StrategyKind};
use crate::propagation::{
    estimate_dense_bytes, read_elpt, sidecar_path, write_elpt, Dtype, OperatorKind, PropagatedTensor, TensorMetadata,
};
use crate::verify::{measure_leakage, LeakageConfig, LeakageMetric};

#[derive(Debug, Parser)]
#[command(
    name = "echoless",
    version,
    about = "Leakage-free label pre-computation for heterogeneous graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random heterogeneous graph with labels and splits.
    GenSynthetic(GenArgs),
    /// Compute label tensors for hops 1..=K.
    Precompute(PrecomputeArgs),
    /// Measure per-node label leakage of a strategy.
    VerifyLeakage(VerifyArgs),
    /// Bytes needed for a dense N x N operator.
    EstimateMemory(EstimateArgs),
    /// Train the linear encoder on tensors and report metrics.
    TrainEval(TrainArgs),
    /// Time strategies over K and M.
    Bench(BenchArgs),
    /// Turn a bench CSV into plot series.
    PlotData(PlotArgs),
}

fn parse_cap(s: &str) -> std::result::Result<u64, String> {
    parse_mem_cap(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// `academic` (authorship and citations) or `clustered` (small author groups).
    #[arg(long, default_value = "academic")]
    pub kind: String,
    /// Target (paper) node count.
    #[arg(long, default_value_t = 1000)]
    pub papers: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    /// Average out-degree per relation (academic).
    #[arg(long, default_value_t = 3.0)]
    pub avg_degree: f64,
    /// Papers per author (clustered).
    #[arg(long, default_value_t = 2.0)]
    pub papers_per_author: f64,
    /// Also write random features of this width to `features.elpt`.
    #[arg(long, default_value_t = 0)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Target node type.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// plain, last-residual, remove-diag or echoless.
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Number of hops K.
    #[arg(long)]
    pub hops: Option<usize>,
    /// metapath, hop-averaged or nonlinear-normalized.
    #[arg(long)]
    pub operator: Option<OperatorKind>,
    /// Comma-separated base metapath from the target type back to it.
    #[arg(long, value_delimiter = ',')]
    pub metapath: Option<Vec<String>>,
    /// row-stochastic or symmetric.
    #[arg(long)]
    pub norm: Option<NormMode>,
    /// Number of training partitions M.
    #[arg(long)]
    pub partitions: Option<usize>,
    /// aps or uniform.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Skip the retention rescaling step.
    #[arg(long)]
    pub no_post_adjust: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dense-operator memory cap, e.g. 128GB or 2GiB.
    #[arg(long, value_parser = parse_cap)]
    pub mem_cap: Option<u64>,
    /// First hop kept by last-residual.
    #[arg(long)]
    pub k_min: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => {
                existing_file(p, "config")?;
                RunConfig::from_file(p)?
            }
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            target: self.target.clone(),
            labels: self.labels.clone(),
            splits: self.splits.clone(),
            num_classes: self.num_classes,
            strategy: self.strategy,
            hops: self.hops,
            operator: self.operator,
            metapath: self.metapath.clone(),
            norm: self.norm,
            partitions: self.partitions,
            scheme: self.scheme,
            post_adjust: self.no_post_adjust.then_some(false),
            seed: self.seed,
            mem_cap: self.mem_cap,
            k_min: self.k_min,
            out_dir: None,
            dtype: None,
        };
        let cfg = base.overlay(flags);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// f32 or f64 payload.
    #[arg(long)]
    pub dtype: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 0.0)]
    pub tolerance: f64,
    /// max-abs or l2.
    #[arg(long, default_value = "max-abs")]
    pub metric: LeakageMetric,
    /// Include per-node leakage in the report.
    #[arg(long)]
    pub per_node: bool,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Node count; alternatively give a graph.
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub dtype_bytes: u64,
    #[arg(long, value_parser = parse_cap)]
    pub mem_cap: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Label tensors (ELPT); retention columns are dropped.
    #[arg(long, num_args = 1.., required = true)]
    pub tensors: Vec<PathBuf>,
    /// Feature tensors (ELPT).
    #[arg(long, num_args = 1..)]
    pub features: Vec<PathBuf>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_in: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dropout_label: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Early-stopping patience in epochs; 0 disables.
    #[arg(long, default_value_t = 0)]
    pub patience: usize,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Strategies to sweep.
    #[arg(long, value_delimiter = ',', default_value = "plain,remove-diag,echoless")]
    pub strategies: Vec<StrategyKind>,
    /// Hop counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub ks: Vec<usize>,
    /// Partition counts to sweep (echoless only).
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub ms: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    /// CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub bench: PathBuf,
    /// JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Held while a run writes into an output directory.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(".echoless.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is in use (lock file {} exists)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match out {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynthetic(a) => gen(a),
        Command::Precompute(a) => precompute(a),
        Command::VerifyLeakage(a) => verify(a),
        Command::EstimateMemory(a) => estimate(a),
        Command::TrainEval(a) => train_eval(a),
        Command::Bench(a) => bench(a),
        Command::PlotData(a) => plot(a),
    }
}

fn gen(a: GenArgs) -> Result<()> {
    let mut spec = match a.kind.as_str() {
        "academic" => SyntheticSpec::academic(a.papers, a.classes, a.train_frac, a.avg_degree),
        "clustered" => SyntheticSpec::clustered(a.papers, a.classes, a.train_frac, a.papers_per_author),
        other => return Err(Error::Config(format!("unknown synthetic kind {other}"))),
    };
    spec.feature_dim = a.feature_dim;
    let data = gen_synthetic(&spec, a.seed)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_graph(&data.graph, &a.out.join("nodes.tsv"), &a.out.join("edges.tsv"))?;
    write_labels(&data.truth, &a.out.join("labels.tsv"))?;
    write_splits(&data.split, &a.out.join("splits.tsv"))?;
    if let Some(x) = data.features {
        write_elpt(
            &a.out.join("features.elpt"),
            &PropagatedTensor::without_retention(x),
            Dtype::F64,
            None,
        )?;
    }
    eprintln!(
        "wrote {} {} nodes, {} edges to {}",
        data.graph.num_targets(),
        data.graph.target_name(),
        data.graph.num_edges(),
        a.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    strategy: &'a str,
    hops: usize,
    files: Vec<String>,
    passes: Vec<usize>,
    zeroed_rows: Vec<usize>,
    config: &'a RunConfig,
}

fn parse_dtype(s: Option<&str>, fallback: Dtype) -> Result<Dtype> {
    match s {
        None => Ok(fallback),
        Some("f32") => Ok(Dtype::F32),
        Some("f64") => Ok(Dtype::F64),
        Some(other) => Err(Error::Config(format!("unknown dtype {other} (expected f32 or f64)"))),
    }
}

fn precompute(a: PrecomputeArgs) -> Result<()> {
    let mut cfg = a.run.resolve()?;
    if a.out.is_some() {
        cfg.out_dir = a.out.clone();
    }
    let dtype = parse_dtype(a.dtype.as_deref(), cfg.dtype())?;
    cfg.dtype = Some(dtype);
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("missing output directory (--out)".into()))?;
    let inputs = cfg.load_inputs()?;
    let plans = cfg.plans();
    let strategy = cfg.strategy();
    let _lock = DirLock::acquire(&out_dir)?;
    let outputs = run_strategy(&strategy, &plans, &inputs.graph, &inputs.labels, &inputs.split)?;

    let mut files = Vec::new();
    for h in &outputs {
        let plan = &plans[h.hop - 1];
        let mut params = serde_json::Map::new();
        params.insert("norm".into(), serde_json::to_value(plan.norm()).unwrap());
        params.insert("hops".into(), plan.hops().into());
        match &strategy {
            crate::precompute::Strategy::Echoless(e) => {
                params.insert("partitions".into(), e.partitions.into());
                params.insert("scheme".into(), serde_json::to_value(e.scheme).unwrap());
                params.insert("post_adjust".into(), e.post_adjust.into());
                params.insert("passes".into(), h.passes.into());
                params.insert("zeroed_rows".into(), h.zeroed_rows.into());
            }
            crate::precompute::Strategy::RemoveDiag { mem_cap } => {
                params.insert("mem_cap".into(), (*mem_cap).into());
            }
            crate::precompute::Strategy::LastResidual { k_min } => {
                params.insert("k_min".into(), (*k_min).into());
            }
            crate::precompute::Strategy::Plain => {}
        }
        let meta = TensorMetadata {
            strategy: strategy.name().into(),
            plan: plan.describe(),
            operator_kind: plan.kind().as_str().into(),
            hop: h.hop,
            seed: matches!(strategy, crate::precompute::Strategy::Echoless(_)).then(|| cfg.echoless().seed),
            rows: h.tensor.rows(),
            cols: h.tensor.cols(),
            retention_column: h.tensor.has_retention(),
            params,
            notes: Vec::new(),
        };
        let path = out_dir.join(format!("hop_{}.elpt", h.hop));
        write_elpt(&path, &h.tensor, dtype, Some(&meta))?;
        let back = read_elpt(&path)?;
        let expected = PropagatedTensor::from_bytes(&h.tensor.to_bytes(dtype))?;
        if back != expected {
            return Err(Error::Format(format!(
                "{} did not read back identically",
                path.display()
            )));
        }
        files.push(path.file_name().unwrap().to_string_lossy().into_owned());
        eprintln!("wrote {} and {}", path.display(), sidecar_path(&path).display());
    }
    let summary = RunSummary {
        strategy: strategy.name(),
        hops: cfg.k(),
        files,
        passes: outputs.iter().map(|h| h.passes).collect(),
        zeroed_rows: outputs.iter().map(|h| h.zeroed_rows).collect(),
        config: &cfg,
    };
    emit_json(&summary, Some(&out_dir.join("run.json")))
}

fn verify(a: VerifyArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let inputs = cfg.load_inputs()?;
    let report = measure_leakage(
        &cfg.strategy(),
        &cfg.plans(),
        &inputs.graph,
        &inputs.labels,
        &inputs.split,
        &LeakageConfig {
            tolerance: a.tolerance,
            metric: a.metric,
            per_node: a.per_node,
        },
    )?;
    emit_json(&report, a.out.as_deref())
}

#[derive(Serialize)]
struct EstimateReport {
    n: u64,
    dtype_bytes: u64,
    bytes: u64,
    terabytes: f64,
    overflow: bool,
    mem_cap: Option<u64>,
    exceeds_cap: Option<bool>,
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let n = match (a.n, &a.nodes) {
        (Some(n), None) => n,
        (None, Some(_)) => {
            let nodes = required_file(&a.nodes, "nodes")?;
            let edges = required_file(&a.edges, "edges")?;
            let target = a
                .target
                .as_deref()
                .ok_or_else(|| Error::Config("missing target node type".into()))?;
            crate::graph::load_graph(nodes, edges, target)?.num_targets() as u64
        }
        _ => {
            return Err(Error::Config(
                "give exactly one of --n or --nodes/--edges/--target".into(),
            ))
        }
    };
    let est = estimate_dense_bytes(n, a.dtype_bytes);
    emit_json(
        &EstimateReport {
            n,
            dtype_bytes: a.dtype_bytes,
            bytes: est.bytes,
            terabytes: est.terabytes(),
            overflow: est.overflow,
            mem_cap: a.mem_cap,
            exceeds_cap: a.mem_cap.map(|c| est.exceeds(c)),
        },
        None,
    )
}

#[derive(Serialize)]
struct TrainEvalReport {
    encoder: &'static str,
    config: EncoderConfig,
    training: TrainReport,
    train: Metrics,
    valid: Option<Metrics>,
    test: Option<Metrics>,
    notes: Vec<&'static str>,
}

fn train_eval(a: TrainArgs) -> Result<()> {
    existing_file(&a.labels, "labels")?;
    existing_file(&a.splits, "splits")?;
    let mut blocks = Vec::new();
    for p in &a.tensors {
        existing_file(p, "tensor")?;
        blocks.push(InputBlock::label(&read_elpt(p)?));
    }
    for p in &a.features {
        existing_file(p, "feature")?;
        let t = read_elpt(p)?;
        blocks.push(InputBlock {
            values: t.into_values(),
            kind: crate::encoder::BlockKind::Feature,
        });
    }
    let n = blocks[0].values.rows();
    let truth = load_labels(&a.labels, n, a.num_classes)?;
    let split = load_splits(&a.splits, n)?;
    let cfg = EncoderConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        dropout_in: a.dropout_in,
        dropout_label: a.dropout_label,
        seed: a.seed,
        patience: a.patience,
    };
    let (model, training) = train_encoder(&blocks, &truth, &split, &cfg)?;
    let score = |part| match evaluate(&model, &blocks, &truth, &split, part) {
        Ok(m) => Ok(Some(m)),
        Err(Error::Split(_)) => Ok(None),
        Err(e) => Err(e),
    };
    let report = TrainEvalReport {
        encoder: "linear-softmax",
        config: cfg.clone(),
        training,
        train: evaluate(&model, &blocks, &truth, &split, Split::Train)?,
        valid: score(Split::Valid)?,
        test: score(Split::Test)?,
        notes: vec!["single linear softmax layer over concatenated input blocks"],
    };
    emit_json(&report, a.metrics_out.as_deref())
}

fn bench(a: BenchArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let inputs = cfg.load_inputs()?;
    let bc = BenchConfig {
        strategies: a.strategies.clone(),
        ks: a.ks.clone(),
        ms: a.ms.clone(),
        family: cfg.family(),
        norm: cfg.norm_mode(),
        echoless: cfg.echoless(),
        mem_cap: cfg.mem_cap_bytes(),
        repetitions: a.repetitions,
    };
    let records = bench_sweep(&inputs.graph, &inputs.labels, &inputs.split, &bc)?;
    match &a.out {
        Some(p) => write_bench_csv(File::create(p).map_err(|e| Error::io(p, e))?, &records),
        None => write_bench_csv(io::stdout().lock(), &records),
    }
}

fn plot(a: PlotArgs) -> Result<()> {
    existing_file(&a.bench, "bench CSV")?;
    let f = File::open(&a.bench).map_err(|e| Error::io(&a.bench, e))?;
    emit_json(&plot_data(&read_bench_csv(f)?), a.out.as_deref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, r#"{"hops": 2, "partitions": 3, "strategy": "plain"}"#).unwrap();
        let args = RunArgs {
            config: Some(p),
            hops: Some(4),
            no_post_adjust: true,
            ..Default::default()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.k(), 4);
        assert_eq!(cfg.partitions, Some(3));
        assert_eq!(cfg.strategy_kind(), StrategyKind::Plain);
        assert_eq!(cfg.post_adjust, Some(false));
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Config(_))));
        drop(lock);
        DirLock::acquire(dir.path()).unwrap();
    }
}
