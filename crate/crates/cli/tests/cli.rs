use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "preset = acceptance
synth.dim = 16
synth.dev_count = 400
synth.per_language_count = 30
synth.test_count = 150
synth.n_oos_languages = 3
dnn.hidden = 12
dnn.epochs = 8
dnn.folds = 2
decision.oos_folds = 2
density.c_max = 4
";

fn langrec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_langrec")).current_dir(dir).args(args).output().unwrap()
}

/// Runs a command that must succeed and parses its summary line.
fn ok(dir: &Path, args: &[&str]) -> HashMap<String, String> {
    let out = langrec(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let line = String::from_utf8(out.stdout).unwrap();
    assert_eq!(line.lines().count(), 1, "summary must be one line: {line}");
    line.split_whitespace()
        .map(|kv| {
            let (k, v) = kv.split_once('=').expect("key=value");
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn small_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    dir
}

#[test]
fn evaluate_hand_case() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("truth.txt"), "1\tA\n2\tA\n3\tB\n4\tB\n5\tout_of_set\n").unwrap();
    std::fs::write(dir.path().join("dec.txt"), "1\tA\n2\tB\n3\tB\n4\tB\n5\tA\n").unwrap();
    let s = ok(dir.path(), &["evaluate", "--decisions", "dec.txt", "--truth", "truth.txt"]);
    assert_eq!(s["cost"], "42.25");
    assert_eq!(s["in_set_errors"], "1/4");
    assert_eq!(s["out_of_set_errors"], "1/1");
}

#[test]
fn synth_is_deterministic() {
    let dir = small_dir();
    let p = dir.path();
    ok(p, &["--config", "small.cfg", "--seed", "1", "synth", "--out", "a"]);
    ok(p, &["synth", "--seed", "1", "--config", "small.cfg", "--out", "b"]);
    ok(p, &["--config", "small.cfg", "--seed", "2", "synth", "--out", "c"]);
    for f in ["dev.ivec", "train.ivec", "test.ivec", "truth.txt"] {
        let a = std::fs::read(p.join("a").join(f)).unwrap();
        assert_eq!(a, std::fs::read(p.join("b").join(f)).unwrap(), "{f} differs");
    }
    assert_ne!(std::fs::read(p.join("a/train.ivec")).unwrap(), std::fs::read(p.join("c/train.ivec")).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["bogus"][..], &["evaluate", "--decisions", "x"], &["synth", "--out", "o", "--frobnicate"]] {
        let out = langrec(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(langrec(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn processing_errors_exit_1_with_module_prefix() {
    let dir = small_dir();
    let p = dir.path();
    let out = langrec(p, &["evaluate", "--decisions", "missing.txt", "--truth", "missing.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("langrec: evaluate: missing.txt"), "{err}");

    let out = langrec(p, &["--set", "gmm.nonsense=3", "synth", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("langrec: config:"));

    std::fs::write(p.join("bad.txt"), "#scores v1 kind=gmm\nnot a header\n").unwrap();
    let out = langrec(p, &["det", "--scores", "bad.txt", "--truth", "bad.txt", "--out", "d.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("langrec: det: bad.txt"));
}

#[test]
fn step_by_step_chain() {
    let dir = small_dir();
    let p = dir.path();
    let cfg = ["--config", "small.cfg"];
    let run = |args: &[&str]| ok(p, &[&cfg[..], args].concat());

    let s = run(&["synth", "--out", "d"]);
    assert_eq!(s["languages"], "10");
    let s = run(&["preprocess", "fit", "--dev", "d/dev.ivec", "--train", "d/train.ivec", "--out", "pre.json"]);
    assert_eq!(s["output_dim"], "9");
    for c in ["dev", "train", "test"] {
        run(&["preprocess", "apply", "--model", "pre.json", "--input", &format!("d/{c}.ivec"), "--out", &format!("{c}.p.ivec")]);
        run(&[
            "preprocess", "apply", "--model", "pre.json", "--input", &format!("d/{c}.ivec"),
            "--normalize-only", "--out", &format!("{c}.n.ivec"),
        ]);
    }
    run(&["baseline", "train", "--train", "train.n.ivec", "--out", "cos.json"]);
    run(&["baseline", "score", "--model", "cos.json", "--input", "test.n.ivec", "--out", "cos.txt"]);
    run(&["loo", "baseline", "--model", "cos.json", "--train", "train.n.ivec", "--out", "cos_loo.txt"]);
    run(&["gmm", "train", "--dev", "dev.p.ivec", "--train", "train.p.ivec", "--out", "gmm.json"]);
    run(&["gmm", "score", "--model", "gmm.json", "--input", "test.p.ivec", "--out", "gmm.txt"]);
    let s = run(&["loo", "gmm", "--model", "gmm.json", "--train", "train.p.ivec", "--out", "gmm_loo.txt"]);
    assert_eq!(s["rows"], "300");
    run(&["dnn", "train", "--train", "train.p.ivec", "--out", "dnn.json"]);
    run(&["dnn", "score", "--model", "dnn.json", "--input", "test.p.ivec", "--out", "dnn.txt"]);
    run(&["loo", "dnn", "--train", "train.p.ivec", "--out", "dnn_cv.txt"]);

    let s = run(&["fusion", "fit-density", "--scores", "gmm_loo.txt", "--labels", "d/train.ivec", "--out", "dens.json"]);
    assert_eq!(s["pairs"], "3000");
    run(&["fusion", "transform", "--model", "dens.json", "--scores", "gmm_loo.txt", "--out", "gmm_lr_loo.txt"]);
    run(&["fusion", "transform", "--model", "dens.json", "--scores", "gmm.txt", "--out", "gmm_lr.txt"]);
    let s = run(&[
        "fuse", "train", "--scores", "gmm_loo.txt", "--scores", "dnn_cv.txt", "--labels", "d/train.ivec",
        "--out", "fuse.json",
    ]);
    assert_eq!(s["weights"].split(',').count(), 2);
    run(&["fuse", "apply", "--model", "fuse.json", "--scores", "gmm.txt", "--scores", "dnn.txt", "--out", "fused.txt"]);

    let s = run(&[
        "decide", "--scores", "gmm_lr.txt", "--tune-scores", "gmm_lr_loo.txt", "--tune-labels", "d/train.ivec",
        "--policy-out", "policy.json", "--out", "dec.txt",
    ]);
    assert_eq!(s["decisions"], "150");
    let tuned = run(&["evaluate", "--decisions", "dec.txt", "--truth", "d/truth.txt"]);
    let cost: f64 = tuned["cost"].parse().unwrap();
    assert!((0.0..=100.0).contains(&cost));

    // Reapplying the saved policy reproduces the decisions.
    run(&["decide", "--scores", "gmm_lr.txt", "--policy", "policy.json", "--out", "dec2.txt"]);
    assert_eq!(std::fs::read(p.join("dec.txt")).unwrap(), std::fs::read(p.join("dec2.txt")).unwrap());

    let s = run(&["det", "--scores", "fused.txt", "--truth", "d/truth.txt", "--out", "det.txt"]);
    let eer: f64 = s["eer"].parse().unwrap();
    assert!((0.0..=0.5).contains(&eer));
    assert!(std::fs::read_to_string(p.join("det.txt")).unwrap().starts_with("#det v1"));
}

#[test]
fn pipeline_reports_every_system() {
    let dir = small_dir();
    let s = ok(dir.path(), &["--config", "small.cfg", "pipeline", "--out", "run"]);
    for k in [
        "cost_baseline",
        "cost_gmm",
        "cost_dnn",
        "cost_gmm_plus_dnn",
        "cost_gmm_lr",
        "cost_dnn_lr",
        "cost_gmm_lr_plus_dnn_lr",
        "eer_gmm",
        "eer_gmm_lr",
    ] {
        assert!(s.contains_key(k), "missing {k}");
    }
    assert!(dir.path().join("run/summary.txt").exists());
    assert!(dir.path().join("run/decisions_gmm_lr_plus_dnn_lr.txt").exists());
}
