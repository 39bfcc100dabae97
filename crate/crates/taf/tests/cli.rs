//! End-to-end checks of the `taf` binary: exit codes, output formats, and
//! the synth → train → eval → inspect pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_taf")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn taf")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("taf-cli-{}-{name}", std::process::id()))
}

fn synth_with(dir: &Path, dim: usize, test_count: usize) {
    let dim = dim.to_string();
    let test_count = test_count.to_string();
    let args = vec![
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--classes",
        "2",
        "--dim",
        &dim,
        "--train-count",
        "24",
        "--test-count",
        &test_count,
        "--t-min",
        "10",
        "--t-max",
        "14",
        "--motif-len",
        "4",
        "--seed",
        "9",
    ];
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}


#[test]
fn synth_is_deterministic_across_runs() {
    let a = tmp("synth-a");
    let b = tmp("synth-b");
    synth_with(&a, 4, 10);
    synth_with(&b, 4, 10);
    for name in ["manifest.tsv", "positions.tsv", "train00000.taf", "test00003.taf"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
}

#[test]
fn synth_rejects_single_class() {
    let out = run(&["synth", "--out", tmp("synth-one").to_str().unwrap(), "--classes", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn unknown_model_kind_is_a_usage_error() {
    let dir = tmp("unknown-model");
    synth_with(&dir, 4, 10);
    let manifest = dir.join("manifest.tsv");
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "warp",
        "--out",
        dir.join("m.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_reproduces_training_accuracy_and_confusion_sums() {
    let dir = tmp("train-eval");
    synth_with(&dir, 4, 10);
    let manifest = dir.join("manifest.tsv");
    let ckpt = dir.join("mean.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "mean",
        "--iters",
        "60",
        "--batch",
        "12",
        "--hidden",
        "8",
        "--seed",
        "4",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let reported: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("test_accuracy\t"))
        .expect("test accuracy line")
        .parse()
        .unwrap();

    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    let accuracy: f64 = lines
        .next()
        .unwrap()
        .strip_prefix("accuracy\t")
        .expect("accuracy line")
        .parse()
        .unwrap();
    assert_eq!(accuracy, reported, "eval and train disagree");

    // confusion rows sum to the per-class test counts (10 samples, classes
    // assigned round-robin: 5 each)
    let rows: Vec<Vec<usize>> = lines
        .map(|l| l.split('\t').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert_eq!(row.iter().sum::<usize>(), 5);
    }
}

#[test]
fn eval_rejects_dimension_mismatch_and_empty_split() {
    let dir = tmp("eval-mismatch");
    synth_with(&dir, 4, 10);
    let ckpt = dir.join("mean.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        dir.join("manifest.tsv").to_str().unwrap(),
        "--model",
        "mean",
        "--iters",
        "10",
        "--batch",
        "8",
        "--hidden",
        "4",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    // different feature dimension
    let wide = tmp("eval-mismatch-wide");
    synth_with(&wide, 6, 10);
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        wide.join("manifest.tsv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    // no test entries at all
    let trainonly = tmp("eval-train-only");
    synth_with(&trainonly, 4, 0);
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        trainonly.join("manifest.tsv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes_follow_the_verdict() {
    let out = run(&["gradcheck", "--model", "static"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("result\tpass"));

    // tolerance tighter than finite-difference truncation error must fail
    let out = run(&["gradcheck", "--model", "static", "--tol", "1e-12"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("result\tfail"));
}

#[test]
fn inspect_pyramid_and_untrained_lstm_placements() {
    let dir = tmp("inspect");
    synth_with(&dir, 4, 10);
    let manifest = dir.join("manifest.tsv");

    // level-1 pyramid: one filter centered at g_rel = 0.5
    let pyr = dir.join("pyr.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "pyramid",
        "--pyramid-level",
        "1",
        "--iters",
        "0",
        "--hidden",
        "4",
        "--out",
        pyr.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["inspect", "--checkpoint", pyr.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split('\t').collect();
    let g_rel: f64 = fields[5].parse().unwrap();
    assert!((g_rel - 0.5).abs() <= 1e-12);

    // untrained lstm: init placement is centered and full span, with a
    // warning when no features are given
    let lstm = dir.join("lstm.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--model",
        "lstm",
        "--filters",
        "1",
        "--taps",
        "3",
        "--steps",
        "2",
        "--lstm-hidden",
        "4",
        "--iters",
        "0",
        "--hidden",
        "4",
        "--out",
        lstm.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["inspect", "--checkpoint", lstm.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let text = stdout(&out);
    let fields: Vec<&str> = text.lines().nth(1).unwrap().split('\t').collect();
    let g_rel: f64 = fields[5].parse().unwrap();
    let delta_rel: f64 = fields[6].parse().unwrap();
    assert!((g_rel - 0.5).abs() <= 1e-12);
    assert!((delta_rel - 1.0).abs() <= 1e-12);

    // per-video placement: one row per (filter, iteration)
    let feature = dir.join("test00000.taf");
    let out = run(&[
        "inspect",
        "--checkpoint",
        lstm.to_str().unwrap(),
        "--features",
        feature.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 1 + 2); // header + 1 filter x 2 iterations
}

#[test]
fn inspect_writes_svg_lanes() {
    let dir = tmp("svg");
    synth_with(&dir, 4, 10);
    let ckpt = dir.join("static.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        dir.join("manifest.tsv").to_str().unwrap(),
        "--model",
        "static",
        "--filters",
        "3",
        "--taps",
        "2",
        "--iters",
        "5",
        "--batch",
        "8",
        "--hidden",
        "4",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let svg_path = dir.join("filters.svg");
    let out = run(&[
        "inspect",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--svg",
        svg_path.to_str().unwrap(),
        "--tsv",
        dir.join("filters.tsv").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains(r#"height="240""#)); // 80 px per filter lane
    assert_eq!(svg.matches("<polyline").count(), 6); // 3 filters x 2 taps
}

#[test]
fn one_vs_all_checkpoint_round_trips_through_eval() {
    let dir = tmp("ova");
    synth_with(&dir, 4, 10);
    let ckpt = dir.join("ova.ckpt");
    let out = run(&[
        "train",
        "--manifest",
        dir.join("manifest.tsv").to_str().unwrap(),
        "--model",
        "mean",
        "--one-vs-all",
        "--iters",
        "30",
        "--batch",
        "8",
        "--hidden",
        "4",
        "--seed",
        "2",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        dir.join("manifest.tsv").to_str().unwrap(),
        "--split",
        "train",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("accuracy\t"));
}
