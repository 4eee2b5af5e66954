//! End-to-end runs of the `drhg` binary: exit codes, artifacts, and
//! reproducibility.

use drhg::baselines::random_insertion;
use drhg::instances::{
    read_solutions, tour_length, write_dataset, write_solutions, DistanceKind, Instance, Solution,
};
use drhg::model::{save_checkpoint, CheckpointDtype, HyperParams, ModelParams};
use rand::Rng;
use std::path::Path;
use std::process::{Command, Output};

fn drhg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drhg"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn drhg")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = drhg(args, dir);
    assert!(
        out.status.success(),
        "drhg {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Mirrors the CLI's per-instance seed derivation.
fn instance_seed(seed: u64, index: usize) -> u64 {
    let mut r = drhg::rng::stream(seed, &[0x1d5e, index as u64]);
    r.gen()
}

#[test]
fn gen_writes_dataset_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen", "--kind", "tsp", "--n", "16", "--count", "5", "--seed", "1", "--out", "a.jsonl"],
        dir.path(),
    );
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 5);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "gen");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["n"], 16);
    ok(
        &["gen", "--kind", "tsp", "--n", "16", "--count", "5", "--seed", "1", "--out", "b.jsonl"],
        dir.path(),
    );
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b, "same flags must give byte-identical datasets");
}

#[test]
fn gen_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = drhg(
        &["gen", "--kind", "tsp", "--n", "2", "--count", "1", "--out", "x.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&tiny), 2, "n=2 tsp must be a usage error");
    assert!(String::from_utf8_lossy(&tiny.stderr).contains("usage error"));
    let kind = drhg(
        &["gen", "--kind", "atsp", "--n", "5", "--count", "1", "--out", "x.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&kind), 2);
    assert!(!dir.path().join("x.jsonl").exists());
}

#[test]
fn label_exact_refuses_oversize_instances() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen", "--kind", "tsp", "--n", "20", "--count", "1", "--seed", "3", "--out", "d.jsonl"],
        dir.path(),
    );
    let out = drhg(&["label", "d.jsonl", "--mode", "exact", "--out", "l.jsonl"], dir.path());
    assert_eq!(code(&out), 1, "n=20 exceeds the exact labeler's limit");
    ok(&["label", "d.jsonl", "--mode", "local", "--out", "l.jsonl"], dir.path());
    assert!(dir.path().join("l.jsonl").exists());
}

#[test]
fn solve_with_zero_iterations_returns_the_construction_tour() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen", "--kind", "tsp", "--n", "10", "--count", "3", "--seed", "9", "--out", "d.jsonl"],
        dir.path(),
    );
    ok(
        &[
            "solve", "d.jsonl", "--policy", "oracle", "--iters", "0", "--seed", "5", "--out",
            "s.jsonl",
        ],
        dir.path(),
    );
    let instances = drhg::instances::read_dataset(&dir.path().join("d.jsonl")).unwrap();
    let solutions = read_solutions(&dir.path().join("s.jsonl")).unwrap();
    assert_eq!(solutions.len(), 3);
    for (i, (inst, sol)) in instances.iter().zip(&solutions).enumerate() {
        let start = random_insertion(inst, instance_seed(5, i)).unwrap();
        let expected = tour_length(inst, &start).unwrap();
        assert!(
            (sol.objective - expected).abs() < 1e-9,
            "zero-iteration solve must return the random-insertion tour"
        );
    }
}

#[test]
fn solve_rejects_checkpoint_of_the_wrong_kind() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen", "--kind", "tsp", "--n", "8", "--count", "1", "--seed", "2", "--out", "d.jsonl"],
        dir.path(),
    );
    let hp = HyperParams { d_h: 16, l: 1, heads: 2, r_f: 2, r_c: 2, d_ff: 32, ..HyperParams::default_cvrp() };
    let params = ModelParams::init(&hp, 0).unwrap();
    let ckpt = dir.path().join("cvrp.ckpt");
    save_checkpoint(&ckpt, &params, CheckpointDtype::F64).unwrap();
    let out = drhg(
        &["solve", "d.jsonl", "--ckpt", "cvrp.ckpt", "--iters", "1", "--out", "s.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("input_dim"));
    let missing = drhg(&["solve", "d.jsonl", "--iters", "1", "--out", "s.jsonl"], dir.path());
    assert_eq!(code(&missing), 2, "model policy without --ckpt is flag misuse");
}

#[test]
fn pipeline_gen_label_train_solve_eval() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["gen", "--kind", "tsp", "--n", "8", "--count", "12", "--seed", "11", "--out", "d.jsonl"],
        dir.path(),
    );
    ok(&["label", "d.jsonl", "--mode", "exact", "--out", "l.jsonl"], dir.path());
    ok(
        &[
            "train", "d.jsonl", "--labels", "l.jsonl", "--out", "run", "--epochs", "1",
            "--batch-size", "4", "--k-min", "3", "--k-max", "5", "--lr", "1e-3", "--d-h", "16",
            "--layers", "1", "--heads", "2", "--r-f", "2", "--r-c", "2", "--d-ff", "32",
            "--val-count", "2", "--val-iters", "5", "--seed", "4",
        ],
        dir.path(),
    );
    let run = dir.path().join("run");
    assert!(run.join("final.ckpt").exists());
    assert!(run.join("metrics.csv").exists());
    assert!(run.join("manifest.json").exists());
    ok(
        &[
            "solve", "d.jsonl", "--ckpt", "run/final.ckpt", "--iters", "3", "--k-min", "3",
            "--k-max", "4", "--out", "s.jsonl", "--trace", "traces",
        ],
        dir.path(),
    );
    let solutions = read_solutions(&dir.path().join("s.jsonl")).unwrap();
    assert_eq!(solutions.len(), 12);
    assert!(solutions.iter().all(|s| s.order.is_some() && s.objective.is_finite()));
    let traces: Vec<_> = std::fs::read_dir(dir.path().join("traces"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
        .collect();
    assert_eq!(traces.len(), 12);
    let eval = ok(
        &[
            "eval", "d.jsonl", "--ckpt", "run/final.ckpt", "--labels", "l.jsonl", "--iters", "2",
            "--k-min", "3", "--k-max", "4", "--out", "e.csv",
        ],
        dir.path(),
    );
    let table = String::from_utf8_lossy(&eval.stdout);
    assert!(table.contains("mean objective"), "stdout table missing: {table}");
    let csv = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert!(csv.starts_with("name,objective,reference,gap_percent,millis"));
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn plot_draws_square_tours_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let inst = Instance::new_tsp(
        "square",
        vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        DistanceKind::ExactEuclidean,
    )
    .unwrap();
    write_dataset(&dir.path().join("d.jsonl"), &[inst]).unwrap();
    let sol = Solution {
        name: "square".into(),
        order: Some(vec![0, 1, 2, 3]),
        routes: None,
        objective: 4.0,
    };
    write_solutions(&dir.path().join("s.jsonl"), &[sol]).unwrap();
    ok(&["plot", "s.jsonl", "d.jsonl", "--out", "a.svg"], dir.path());
    let a = std::fs::read_to_string(dir.path().join("a.svg")).unwrap();
    assert_eq!(a.matches("<line ").count(), 4, "square tour is four edges");
    ok(&["plot", "s.jsonl", "d.jsonl", "--out", "b.svg"], dir.path());
    let b = std::fs::read_to_string(dir.path().join("b.svg")).unwrap();
    assert_eq!(a, b, "same inputs must render identical bytes");
    ok(
        &["plot", "s.jsonl", "d.jsonl", "--out", "t.svg", "--trace", "3", "--k", "1", "--seed", "6"],
        dir.path(),
    );
    let t = std::fs::read_to_string(dir.path().join("t.svg")).unwrap();
    assert_eq!(t.matches("class=\"panel\"").count(), 3, "one panel per requested snapshot");
    let mismatched = drhg(&["plot", "s.jsonl", "d.jsonl", "--name", "missing", "--out", "x.svg"], dir.path());
    assert_eq!(code(&mismatched), 1);
}
