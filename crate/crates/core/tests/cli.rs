//! End-to-end runs of the `maketake` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maketake::model::ModelParams;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_maketake"));
    c.env("MAKETAKE_THREADS", "1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn short_config(dir: &Path, n: usize) -> PathBuf {
    let mut p = ModelParams::baseline_n(n);
    p.horizon = 20.0;
    let path = dir.join(format!("short{n}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&p).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_value_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 2);
    let out = dir.path().join("v.csv");
    let o = run(&["solve", "--config", s(&cfg), "--dt", "0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,q_1,q_2,v,log_neg_v"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 201 * 51 * 51);
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[0].parse::<f64>().unwrap(), 20.0);
    assert_eq!(last[3].parse::<f64>().unwrap(), -1.0);
    assert!(rows.iter().all(|r| r.split(',').nth(3).unwrap().parse::<f64>().unwrap() < 0.0));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 1);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = run(&[
            "simulate", "--config", s(&cfg), "--paths", "20", "--seed", "42", "--out", s(out), "--timeseries",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for suffix in ["", "_paths", "_timeseries"] {
        let read = |p: &Path| {
            let f = p.with_file_name(format!("{}{suffix}.csv", p.file_stem().unwrap().to_str().unwrap()));
            std::fs::read(f).unwrap()
        };
        assert_eq!(read(&a), read(&b), "{suffix}");
    }
    let summary = std::fs::read_to_string(&a).unwrap();
    assert!(summary.starts_with("statistic,mean,se,n\n"));
    assert!(summary.contains("\nexchange_pnl,"));
    let ts = std::fs::read_to_string(dir.path().join("a_timeseries.csv")).unwrap();
    assert!(ts.starts_with("t,S,q_1,best_ask,best_bid,n_a,n_b,xi_1\n"));
}

#[test]
fn calibrate_fee_small_ratio() {
    let o = run(&["calibrate-fee", "--mode", "small-ratio"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["mode"], "small-ratio");
    assert_eq!(doc["c_recommended"], 0.5);
    assert_eq!(doc["inputs"]["n_agents"], 1);
}

#[test]
fn optimal_n_table() {
    let o = run(&["optimal-n"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 10);
    let best = rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    assert_eq!(best.0, 3.0);
}

#[test]
fn first_best_comparison_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 1);
    let out = dir.path().join("fb.csv");
    let o = run(&["first-best", "--config", s(&cfg), "--out", s(&out), "--stride", "50"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,q_1,v_sb,v_fb\n"));
}

#[test]
fn sweep_records_each_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), 1);
    let out = dir.path().join("sweep.csv");
    let o = run(&[
        "sweep", "--config", s(&cfg), "--axis", "c-rule", "--values", "1,2", "--paths", "5", "--out", s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("axis,value,key,n_agents,varpi,c,dt,q_bar"));
    assert!(lines[2].starts_with("c-rule,2.0000000000000000e0,"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["calibrate-fee", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(run(&["sweep", "--axis", "nope", "--values", "1"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["solve", "--config", s(&missing)]).status.code(), Some(3));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"n_agents": 1, "bogus": 3}"#).unwrap();
    let o = run(&["solve", "--config", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    let mut p = ModelParams::baseline();
    p.sigma = -1.0;
    let neg = dir.path().join("neg.json");
    std::fs::write(&neg, serde_json::to_string(&p).unwrap()).unwrap();
    let o = run(&["solve", "--config", s(&neg)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));

    let mut p = ModelParams::baseline();
    p.horizon = 1.0;
    let short = dir.path().join("short.json");
    std::fs::write(&short, serde_json::to_string(&p).unwrap()).unwrap();
    let o = run(&["solve", "--config", s(&short), "--dt", "5"]);
    assert_eq!(o.status.code(), Some(2));
}
