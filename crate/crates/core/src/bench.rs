//! Timing sweeps over strategies, hop counts and partition counts.
//!
//! CSV columns, in order:
//!
//! | column                 | meaning                                          |
//! |------------------------|--------------------------------------------------|
//! | `strategy`             | `echoless`, `last-residual`, `plain`, `remove-diag` |
//! | `K`                    | hops computed (plans `1..=K`)                    |
//! | `M`                    | training partitions; 0 for unpartitioned         |
//! | `N`                    | target nodes                                     |
//! | `E`                    | edges over all relations                         |
//! | `wall_time_seconds`    | fastest repetition; 0 when guarded              |
//! | `peak_estimated_bytes` | analytic working-set estimate                    |
//! | `status`               | `ok` or `oom-guard`                              |

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NormMode};
use crate::labels::{LabelMatrix, SplitAssignment};
use crate::precompute::{check_remove_diag, run_strategy, EcholessConfig, Strategy, StrategyKind};
use crate::propagation::{estimate_dense_bytes, PlanFamily};

pub const CSV_HEADER: [&str; 8] = [
    "strategy",
    "K",
    "M",
    "N",
    "E",
    "wall_time_seconds",
    "peak_estimated_bytes",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchStatus {
    Ok,
    OomGuard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub strategy: StrategyKind,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "E")]
    pub e: usize,
    pub wall_time_seconds: f64,
    pub peak_estimated_bytes: u64,
    pub status: BenchStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub strategies: Vec<StrategyKind>,
    pub ks: Vec<usize>,
    /// Only echoless cells vary over these.
    pub ms: Vec<usize>,
    pub family: PlanFamily,
    pub norm: NormMode,
    /// Echoless settings other than the partition count.
    pub echoless: EcholessConfig,
    pub mem_cap: u64,
    pub repetitions: usize,
}

/// Estimated bytes alive at once: emitted tensors, the input, two node
/// states per node type, and the dense `N x N` operator when diagonal
/// removal needs it. Echoless passes run one at a time, so the estimate does
/// not grow with `M`.
pub fn estimate_peak_bytes(kind: StrategyKind, graph: &HeteroGraph, num_classes: usize, k: usize, dense: bool) -> u64 {
    let n = graph.num_targets() as u64;
    let width = num_classes as u64 + u64::from(kind == StrategyKind::Echoless);
    let all_nodes = graph.num_nodes() as u64;
    let emitted = match kind {
        StrategyKind::LastResidual => 1,
        _ => k as u64,
    };
    let mut bytes = (emitted * n * width + n * width + 2 * all_nodes * width).saturating_mul(8);
    if kind == StrategyKind::Echoless {
        bytes = bytes.saturating_add(n * width * 8);
    }
    if dense {
        bytes = bytes.saturating_add(estimate_dense_bytes(n, 8).bytes);
    }
    bytes
}

/// One record per cell, sorted by `(strategy, K, M)`. Guarded cells are
/// recorded with status `oom-guard` and emit no tensors.
pub fn bench_sweep(
    graph: &HeteroGraph,
    labels: &LabelMatrix,
    split: &SplitAssignment,
    cfg: &BenchConfig,
) -> Result<Vec<BenchRecord>> {
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    if cfg.ks.contains(&0) {
        return Err(Error::Config("K must be at least 1".into()));
    }
    let mut kinds = cfg.strategies.clone();
    kinds.sort();
    kinds.dedup();
    let mut ks = cfg.ks.clone();
    ks.sort();
    ks.dedup();
    let mut ms = cfg.ms.clone();
    ms.sort();
    ms.dedup();

    let (n, e) = (graph.num_targets(), graph.num_edges());
    let c = labels.num_classes();
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for &kind in &kinds {
        for &k in &ks {
            let plans = cfg.family.plans(k, cfg.norm);
            let cell_ms: Vec<usize> = if kind == StrategyKind::Echoless {
                ms.clone()
            } else {
                vec![0]
            };
            for m in cell_ms {
                let echoless = EcholessConfig {
                    partitions: m,
                    parallel: false,
                    ..cfg.echoless.clone()
                };
                let strategy = kind.with_params(k, cfg.mem_cap, &echoless);
                let dense = kind == StrategyKind::RemoveDiag && plans.iter().any(|p| p.hops() > 2);
                let peak = estimate_peak_bytes(kind, graph, c, k, dense);
                let mut record = BenchRecord {
                    strategy: kind,
                    k,
                    m,
                    n,
                    e,
                    wall_time_seconds: 0.0,
                    peak_estimated_bytes: peak,
                    status: BenchStatus::Ok,
                };
                if let Strategy::RemoveDiag { mem_cap } = strategy {
                    match plans.iter().try_for_each(|p| check_remove_diag(p, graph, mem_cap)) {
                        Err(Error::MemoryGuard { .. }) => record.status = BenchStatus::OomGuard,
                        other => other?,
                    }
                }
                let timed = (record.status == BenchStatus::Ok).then_some(cells.len());
                if timed.is_some() {
                    cells.push((strategy, plans.clone()));
                }
                records.push((record, timed));
            }
        }
    }

    // Rounds visit every cell once so that drift in machine load spreads
    // over all cells instead of biasing whichever ran first.
    let mut times = vec![Vec::with_capacity(cfg.repetitions); cells.len()];
    for _ in 0..cfg.repetitions {
        for ((strategy, plans), t) in cells.iter().zip(&mut times) {
            let start = Instant::now();
            let out = run_strategy(strategy, plans, graph, labels, split)?;
            t.push(start.elapsed().as_secs_f64());
            drop(out);
        }
    }
    let records = records
        .into_iter()
        .map(|(mut record, timed)| {
            if let Some(i) = timed {
                record.wall_time_seconds = times[i].iter().copied().fold(f64::INFINITY, f64::min);
            }
            record
        })
        .collect();
    Ok(records)
}

pub fn write_bench_csv<W: Write>(out: W, records: &[BenchRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let fmt = |e: csv::Error| Error::Format(format!("writing bench CSV: {e}"));
    w.write_record(CSV_HEADER).map_err(fmt)?;
    for r in records {
        w.serialize(r).map_err(fmt)?;
    }
    w.flush()
        .map_err(|e| Error::Format(format!("writing bench CSV: {e}")))?;
    Ok(())
}

pub fn read_bench_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r
        .headers()
        .map_err(|e| Error::Format(format!("reading bench CSV: {e}")))?
        .clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Format(format!("unexpected bench CSV header {headers:?}")));
    }
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(format!("reading bench CSV: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x: usize,
    pub wall_time_seconds: f64,
    pub peak_estimated_bytes: u64,
    pub status: BenchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub strategy: StrategyKind,
    /// The parameter held fixed: `M` for time-vs-K, `K` for time-vs-M.
    pub fixed: usize,
    pub points: Vec<PlotPoint>,
}

/// Series behind time-vs-K and time-vs-M plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub time_vs_k: Vec<PlotSeries>,
    pub time_vs_m: Vec<PlotSeries>,
}

pub fn plot_data(records: &[BenchRecord]) -> PlotData {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.strategy, r.k, r.m));
    let point = |r: &BenchRecord, x| PlotPoint {
        x,
        wall_time_seconds: r.wall_time_seconds,
        peak_estimated_bytes: r.peak_estimated_bytes,
        status: r.status,
    };
    let mut by_m: Vec<((StrategyKind, usize), Vec<PlotPoint>)> = Vec::new();
    let mut by_k: Vec<((StrategyKind, usize), Vec<PlotPoint>)> = Vec::new();
    for r in &sorted {
        push_point(&mut by_m, (r.strategy, r.m), point(r, r.k));
        if r.strategy == StrategyKind::Echoless {
            push_point(&mut by_k, (r.strategy, r.k), point(r, r.m));
        }
    }
    let series = |groups: Vec<((StrategyKind, usize), Vec<PlotPoint>)>| {
        let mut s: Vec<PlotSeries> = groups
            .into_iter()
            .map(|((strategy, fixed), mut points)| {
                points.sort_by_key(|p| p.x);
                PlotSeries {
                    strategy,
                    fixed,
                    points,
                }
            })
            .collect();
        s.sort_by_key(|s| (s.strategy, s.fixed));
        s
    };
    PlotData {
        time_vs_k: series(by_m),
        time_vs_m: series(by_k),
    }
}

fn push_point(groups: &mut Vec<((StrategyKind, usize), Vec<PlotPoint>)>, key: (StrategyKind, usize), p: PlotPoint) {
    match groups.iter_mut().find(|(k, _)| *k == key) {
        Some((_, pts)) => pts.push(p),
        None => groups.push((key, vec![p])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_synthetic, SyntheticSpec};
    use crate::labels::LabelMatrix;

    fn cfg(strategies: Vec<StrategyKind>, ks: Vec<usize>, ms: Vec<usize>, mem_cap: u64) -> BenchConfig {
        BenchConfig {
            strategies,
            ks,
            ms,
            family: PlanFamily::HopAveraged,
            norm: NormMode::RowStochastic,
            echoless: EcholessConfig::default(),
            mem_cap,
            repetitions: 1,
        }
    }

    fn data() -> (HeteroGraph, LabelMatrix, SplitAssignment) {
        let d = gen_synthetic(&SyntheticSpec::academic(60, 3, 0.5, 2.0), 4).unwrap();
        let y = LabelMatrix::from_truth(&d.truth, &d.split).unwrap();
        (d.graph, y, d.split)
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let (g, y, s) = data();
        let recs = bench_sweep(&g, &y, &s, &cfg(vec![], vec![], vec![], 1 << 30)).unwrap();
        assert!(recs.is_empty());
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &recs).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "strategy,K,M,N,E,wall_time_seconds,peak_estimated_bytes,status\n"
        );
    }

    #[test]
    fn guard_crossover_and_ordering() {
        let (g, y, s) = data();
        // 60 targets: dense operator needs 28800 bytes.
        let c = cfg(
            vec![StrategyKind::RemoveDiag, StrategyKind::Echoless, StrategyKind::Plain],
            vec![3, 2],
            vec![2, 1],
            20_000,
        );
        let recs = bench_sweep(&g, &y, &s, &c).unwrap();
        let keys: Vec<_> = recs.iter().map(|r| (r.strategy.as_str(), r.k, r.m)).collect();
        assert_eq!(
            keys,
            vec![
                ("echoless", 2, 1),
                ("echoless", 2, 2),
                ("echoless", 3, 1),
                ("echoless", 3, 2),
                ("plain", 2, 0),
                ("plain", 3, 0),
                ("remove-diag", 2, 0),
                ("remove-diag", 3, 0),
            ]
        );
        assert_eq!(recs[6].status, BenchStatus::Ok);
        assert_eq!(recs[7].status, BenchStatus::OomGuard);
        assert_eq!(recs[7].wall_time_seconds, 0.0);
        assert!(recs[7].peak_estimated_bytes >= 28_800);
        assert!(recs.iter().all(|r| r.wall_time_seconds >= 0.0));

        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &recs).unwrap();
        assert_eq!(read_bench_csv(buf.as_slice()).unwrap(), recs);

        let plot = plot_data(&recs);
        assert_eq!(plot.time_vs_m.len(), 2);
        assert_eq!(
            plot.time_vs_m[0].points.iter().map(|p| p.x).collect::<Vec<_>>(),
            vec![1, 2]
        );
        assert_eq!(plot.time_vs_k.len(), 4);
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_bench_csv("a,b\n1,2\n".as_bytes()).is_err());
    }
}
