mod common;

use std::path::Path;
use std::process::{Command, Output};

use tender_risk::cli::RunManifest;
use tender_risk::report::ReportSet;

use common::*;

fn tool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tender-risk")).args(args).output().expect("run binary")
}

fn ok(args: &[&str]) -> String {
    let o = tool(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_and_prepare(root: &Path, quarters: u32) -> std::path::PathBuf {
    let mut cfg = one_segment_config(7, 250, quarters, [0.5, 0.25, 0.15, 0.1], 1.0);
    cfg.attributes = compact_attributes();
    let cfg_path = root.join("synth.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let data = root.join("data");
    ok(&["synth", "--config", s(&cfg_path), "--out", s(&data)]);
    ok(&["prepare", "--input", s(&data)]);
    data
}

#[test]
fn full_pipeline_writes_verifiable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = synth_and_prepare(root, 7);
    for f in ["snapshots.csv", "generator.json", "labeled.bin", "class_counts.csv", "manifest.json"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let run_cfg = root.join("run.json");
    std::fs::write(&run_cfg, r#"{ "hyperparams": { "num_iterations": 15 }, "bayes_budget": 6 }"#).unwrap();
    let common = |out: &Path| vec!["--config".to_string(), s(&run_cfg).into(), "--labeled".into(), s(&data).into(), "--out".into(), s(out).into()];
    let run = |sub: &str, out: &Path, extra: &[&str]| {
        let mut args = vec![sub.to_string()];
        args.extend(common(out));
        args.extend(extra.iter().map(|x| x.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs)
    };

    let feat = root.join("feat");
    run("featurize", &feat, &["--train-until", "2018Q2"]);
    assert!(feat.join("features.bin").exists() && feat.join("feature_schema.json").exists());

    let model = root.join("model");
    run("train", &model, &[]);
    for f in ["BU2_GEO4.model", "BU2_GEO4.model.txt", "BU2_GEO4_importance.csv"] {
        assert!(model.join(f).exists(), "{f}");
    }

    let bt = root.join("bt");
    let stdout = run("backtest", &bt, &["--mode", "none"]);
    assert!(stdout.contains("BU2/GEO4"));
    let set = ReportSet::read(&bt.join("report.json")).unwrap();
    assert_eq!(set.reports.len(), 1);
    assert_eq!(ReportSet::from_json(&set.to_json().unwrap()).unwrap(), set);
    let csv = std::fs::read_to_string(bt.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("segment,mode,avg_accuracy"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], ["BU2/GEO4", "none"]);
    assert!(row[2..].iter().filter(|c| !c.is_empty()).all(|c| c.split_once('.').unwrap().1.len() == 4));
    assert_eq!(std::fs::read_dir(bt.join("models")).unwrap().count(), 3);

    let opt = root.join("opt");
    run("optimize", &opt, &["--method", "grid", "--train-until", "2018Q3"]);
    let trace = std::fs::read_to_string(opt.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 35);
    assert!(opt.join("weights.json").exists());

    let sweep = root.join("sweep");
    run("sweep-window", &sweep, &["--sizes", "2,3,9"]);
    let rows = std::fs::read_to_string(sweep.join("window_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3);

    let sel = root.join("sel");
    run("select-features", &sel, &["--thresholds", "0,3"]);
    assert!(sel.join("feature_selection.csv").exists());

    let rep = root.join("rep");
    let printed = ok(&["report", "--input", s(&bt.join("report.json")), "--out", s(&rep)]);
    assert_eq!(printed, csv);
    assert_eq!(std::fs::read_to_string(rep.join("report.csv")).unwrap(), csv);

    for out in [&data, &feat, &model, &bt, &opt, &sweep, &sel, &rep] {
        let manifest = out.join("manifest.json");
        assert!(RunManifest::verify(&manifest).unwrap() > 0, "{}", manifest.display());
        ok(&["report", "--verify", s(&manifest)]);
    }
}

#[test]
fn tampered_artifact_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_and_prepare(dir.path(), 5);
    let manifest = data.join("manifest.json");
    ok(&["report", "--verify", s(&manifest)]);
    let csv = data.join("class_counts.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("tampered\n");
    std::fs::write(&csv, text).unwrap();
    let o = tool(&["report", "--verify", s(&manifest)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("class_counts.csv"));
}

#[test]
fn short_span_is_rejected_with_the_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_and_prepare(dir.path(), 4);
    let out = dir.path().join("bt");
    let o = tool(&["backtest", "--labeled", s(&data), "--out", s(&out), "--mode", "none"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("at least 5 quarters"), "{err}");
    assert!(err.contains("BU2/GEO4"), "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(tool(&[]).status.code(), Some(2));
    assert_eq!(tool(&["backtest", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(tool(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(tool(&["--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{ "no_such_field": 1 }"#).unwrap();
    let o = tool(&["backtest", "--config", s(&cfg), "--labeled", s(dir.path()), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
