use std::path::Path;
use std::process::{Command, Output};

use hardboost::bench::BenchmarkSpec;
use hardboost::cli::RunManifest;

fn hardboost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardboost")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn synth(root: &Path, spec: &BenchmarkSpec) -> String {
    let spec_path = root.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec(spec).unwrap()).unwrap();
    let data = root.join("data");
    let out = hardboost(&["synth", "--spec", &s(&spec_path), "--out", &s(&data)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    s(&data)
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(hardboost(&["--help"]).status.code(), Some(0));
    assert_eq!(hardboost(&["--version"]).status.code(), Some(0));
    assert_eq!(hardboost(&[]).status.code(), Some(1));
    assert_eq!(hardboost(&["hars", "--data", "x"]).status.code(), Some(1));
    let missing = hardboost(&["eval", "--preds", "/nonexistent/p.csv", "--data", "/nonexistent"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("error"));
}

#[test]
fn every_subcommand_is_listed() {
    let help = String::from_utf8(hardboost(&["--help"]).stdout).unwrap();
    for sub in ["synth", "identify", "hars", "harst", "eval", "analyze", "sweep"] {
        assert!(help.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn synth_seed_override_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &BenchmarkSpec::standard(1));
    let m = manifest(Path::new(&data));
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, 1);
    assert_eq!(m.version, env!("CARGO_PKG_VERSION"));
    assert_eq!(m.inputs.len(), 1);
    assert!(m.inputs.values().all(|h| h.len() == 64));
    for f in ["ground_truth.json", "w0.json"] {
        assert!(Path::new(&data).join(f).exists(), "{f}");
    }

    let other = dir.path().join("other");
    let out = hardboost(&["synth", "--spec", &s(&dir.path().join("spec.json")), "--out", &s(&other), "--seed", "2"]);
    assert!(out.status.success());
    assert_eq!(manifest(&other).seed, 2);
    assert_ne!(
        std::fs::read(Path::new(&data).join("ground_truth.json")).unwrap(),
        std::fs::read(other.join("ground_truth.json")).unwrap()
    );
}

#[test]
fn identify_needs_predictions_for_cf() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &BenchmarkSpec::standard(0));
    let out = dir.path().join("id");
    assert_eq!(hardboost(&["identify", "--metric", "cf", "--data", &data, "--k", "2", "--out", &s(&out)]).status.code(), Some(2));
    let ok = hardboost(&["identify", "--metric", "ss", "--data", &data, "--k", "3", "--out", &s(&out)]);
    assert!(ok.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("hardness.json")).unwrap()).unwrap();
    assert_eq!(report["metric"], "ss");
    assert_eq!(report["hard"].as_array().unwrap().len(), 3);
    assert_eq!(report["K"], 3);
}

#[test]
fn config_errors_are_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &BenchmarkSpec::standard(0));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"K": 2, "alpah": 1}"#).unwrap();
    let out = hardboost(&["hars", "--data", &data, "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"K": 2, "metric": "ss"}"#).unwrap();
    let out = hardboost(&["harst", "--data", &data, "--config", &s(&cfg), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn harst_gzsl_reports_h_and_eval_reuses_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let spec = BenchmarkSpec {
        test_seen_per_class: 10,
        ..BenchmarkSpec::standard(6)
    };
    let data = synth(dir.path(), &spec);
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"K": 2, "T": 2, "gzsl": true}"#).unwrap();
    let run = dir.path().join("run");
    let out = hardboost(&["harst", "--data", &data, "--config", &s(&cfg), "--out", &s(&run), "--seed", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
    assert!(report["h"].as_f64().is_some());
    let trace: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["records"].as_array().unwrap().len(), 3);
    assert_eq!(manifest(&run).seed, 4);

    let ev = dir.path().join("eval");
    let preds = s(&run.join("predictions.csv"));
    let out = hardboost(&["eval", "--preds", &preds, "--data", &data, "--out", &s(&ev)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(ev.join("confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
}

#[test]
fn sweep_records_failed_points_and_keeps_going() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &BenchmarkSpec::standard(0));
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"K": 2, "N_u": 40}"#).unwrap();
    let grid = dir.path().join("g.json");
    // K = 9 exceeds the eight unseen classes.
    std::fs::write(&grid, r#"{"K": [2, 9], "beta": [1, 2]}"#).unwrap();
    let out_dir = dir.path().join("sweep");
    let out = hardboost(&["sweep", "--data", &data, "--config", &s(&cfg), "--grid", &s(&grid), "--out", &s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "index,K,T,alpha,beta,acc_u,error");
    assert_eq!(lines.len(), 5);
    for (i, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], i.to_string());
        if cols[1] == "9" {
            assert!(cols[5].is_empty() && !cols[6].is_empty(), "{line}");
        } else {
            assert!(cols[5].parse::<f64>().is_ok() && cols[6].is_empty(), "{line}");
        }
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &BenchmarkSpec::standard(2));
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"K": 2, "N_u": 50}"#).unwrap();
    let mut outputs = vec![];
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = Command::new(env!("CARGO_BIN_EXE_hardboost"))
            .env(hardboost::cli::THREADS_ENV, threads)
            .args(["hars", "--data", &data, "--config", &s(&cfg), "--out", &s(&out_dir)])
            .output()
            .unwrap();
        assert!(out.status.success());
        outputs.push(std::fs::read(out_dir.join("predictions.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
