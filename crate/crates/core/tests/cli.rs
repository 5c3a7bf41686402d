use std::path::Path;
use std::process::{Command, Output};

use echoless::propagation::read_elpt;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_echoless"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen(dir: &Path, papers: usize, extra: &[&str]) {
    let papers = papers.to_string();
    let mut args = vec![
        "gen-synthetic",
        "--papers",
        &papers,
        "--classes",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

fn inputs(dir: &Path) -> Vec<String> {
    let p = |f: &str| dir.join(f).to_string_lossy().into_owned();
    vec![
        "--nodes".into(),
        p("nodes.tsv"),
        "--edges".into(),
        p("edges.tsv"),
        "--labels".into(),
        p("labels.tsv"),
        "--splits".into(),
        p("splits.tsv"),
        "--target".into(),
        "paper".into(),
    ]
}

fn with<'a>(base: &'a [&'a str], dir: &'a [String]) -> Vec<&'a str> {
    base.iter().copied().chain(dir.iter().map(String::as_str)).collect()
}

#[test]
fn precompute_writes_tensors_and_sidecars() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 200, &["--seed", "3"]);
    let out = TempDir::new().unwrap();
    let io = inputs(data.path());
    let o = out.path().to_str().unwrap();
    ok(&with(
        &[
            "precompute",
            "--strategy",
            "echoless",
            "--hops",
            "3",
            "--partitions",
            "2",
            "--out",
            o,
        ],
        &io,
    ));
    for k in 1..=3 {
        let t = read_elpt(&out.path().join(format!("hop_{k}.elpt"))).unwrap();
        assert_eq!(t.shape(), (200, 4));
        assert!(t.has_retention());
        let meta: Value =
            serde_json::from_str(&std::fs::read_to_string(out.path().join(format!("hop_{k}.json"))).unwrap()).unwrap();
        assert_eq!(meta["strategy"], "echoless");
        assert_eq!(meta["hop"], k);
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(summary["files"].as_array().unwrap().len(), 3);
    assert!(!out.path().join(".echoless.lock").exists());
}

#[test]
fn config_file_and_flag_override() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 80, &[]);
    let out = TempDir::new().unwrap();
    let cfg = data.path().join("run.json");
    let d = |f: &str| data.path().join(f).to_string_lossy().into_owned();
    std::fs::write(
        &cfg,
        serde_json::json!({
            "nodes": d("nodes.tsv"), "edges": d("edges.tsv"), "labels": d("labels.tsv"),
            "splits": d("splits.tsv"), "target": "paper", "strategy": "plain", "hops": 3
        })
        .to_string(),
    )
    .unwrap();
    ok(&[
        "precompute",
        "--config",
        cfg.to_str().unwrap(),
        "--hops",
        "2",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert!(out.path().join("hop_2.elpt").exists());
    assert!(!out.path().join("hop_3.elpt").exists());

    std::fs::write(&cfg, r#"{"hopz": 2}"#).unwrap();
    let bad = run(&["precompute", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_labels_is_config_error_naming_path() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 50, &[]);
    std::fs::remove_file(data.path().join("labels.tsv")).unwrap();
    let out = TempDir::new().unwrap();
    let io = inputs(data.path());
    let res = run(&with(&["precompute", "--out", out.path().to_str().unwrap()], &io));
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(
        err.contains(&data.path().join("labels.tsv").to_string_lossy().into_owned()),
        "{err}"
    );
}

#[test]
fn remove_diag_memory_guard_exit_code() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 50_000, &["--avg-degree", "1"]);
    let out = TempDir::new().unwrap();
    let io = inputs(data.path());
    let res = run(&with(
        &[
            "precompute",
            "--strategy",
            "remove-diag",
            "--hops",
            "3",
            "--mem-cap",
            "1GB",
            "--out",
            out.path().to_str().unwrap(),
        ],
        &io,
    ));
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(!out.path().join("hop_1.elpt").exists());
}

#[test]
fn nonlinear_remove_diag_is_rejected() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 60, &[]);
    let out = TempDir::new().unwrap();
    let io = inputs(data.path());
    let o = out.path().to_str().unwrap();
    let res = run(&with(
        &[
            "precompute",
            "--strategy",
            "remove-diag",
            "--operator",
            "nonlinear-normalized",
            "--out",
            o,
        ],
        &io,
    ));
    assert_eq!(res.status.code(), Some(2));
    ok(&with(
        &[
            "precompute",
            "--strategy",
            "echoless",
            "--operator",
            "nonlinear-normalized",
            "--out",
            o,
        ],
        &io,
    ));
}

#[test]
fn lock_blocks_concurrent_writer() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 40, &[]);
    let out = TempDir::new().unwrap();
    std::fs::write(out.path().join(".echoless.lock"), "1").unwrap();
    let io = inputs(data.path());
    let res = run(&with(&["precompute", "--out", out.path().to_str().unwrap()], &io));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn verify_leakage_reports() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 120, &["--seed", "5"]);
    let io = inputs(data.path());
    let plain: Value = serde_json::from_str(&ok(&with(
        &["verify-leakage", "--strategy", "plain", "--hops", "2"],
        &io,
    )))
    .unwrap();
    assert!(plain["leaking_nodes"].as_u64().unwrap() > 0);
    let echo: Value = serde_json::from_str(&ok(&with(
        &["verify-leakage", "--strategy", "echoless", "--hops", "2", "--per-node"],
        &io,
    )))
    .unwrap();
    assert_eq!(echo["leaking_nodes"], 0);
    assert_eq!(echo["max_leakage"].as_f64(), Some(0.0));
    assert!(echo["per_node"].is_array());
}

#[test]
fn estimate_memory_values() {
    let v: Value = serde_json::from_str(&ok(&["estimate-memory", "--n", "1940000", "--mem-cap", "128GB"])).unwrap();
    assert!((v["terabytes"].as_f64().unwrap() - 30.1).abs() < 0.05);
    assert_eq!(v["exceeds_cap"], true);
    let bad = run(&["estimate-memory"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_eval_bench_and_plot() {
    let data = TempDir::new().unwrap();
    gen(data.path(), 150, &["--feature-dim", "4"]);
    let out = TempDir::new().unwrap();
    let io = inputs(data.path());
    let o = out.path().to_str().unwrap();
    ok(&with(&["precompute", "--hops", "2", "--out", o], &io));

    let metrics = out.path().join("metrics.json");
    let d = |f: &str| data.path().join(f).to_string_lossy().into_owned();
    let t = |f: &str| out.path().join(f).to_string_lossy().into_owned();
    ok(&[
        "train-eval",
        "--tensors",
        &t("hop_1.elpt"),
        &t("hop_2.elpt"),
        "--features",
        &d("features.elpt"),
        "--labels",
        &d("labels.tsv"),
        "--splits",
        &d("splits.tsv"),
        "--epochs",
        "20",
        "--metrics-out",
        metrics.to_str().unwrap(),
    ]);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&metrics).unwrap()).unwrap();
    let acc = m["train"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let csv = out.path().join("bench.csv");
    ok(&with(
        &[
            "bench",
            "--strategies",
            "plain,echoless",
            "--ks",
            "1,2",
            "--ms",
            "2",
            "--repetitions",
            "1",
            "--out",
            csv.to_str().unwrap(),
        ],
        &io,
    ));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("strategy,K,M,N,E,wall_time_seconds,peak_estimated_bytes,status"));
    assert_eq!(text.lines().count(), 5);
    let plot: Value = serde_json::from_str(&ok(&["plot-data", "--bench", csv.to_str().unwrap()])).unwrap();
    assert!(plot["time_vs_k"].is_array());
}
