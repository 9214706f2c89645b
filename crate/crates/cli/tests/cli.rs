//! End-to-end tests of the `splitsde-cli` binary: exit codes, output
//! layout, determinism across repeats and thread counts, and the sweep
//! aggregation contract.

use std::path::Path;
use std::process::{Command, Output};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_splitsde-cli")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn run(args: &[&str]) -> Output {
    Command::new(binary()).args(args).output().unwrap()
}

fn run_with_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(binary())
        .args(args)
        .env(key, value)
        .output()
        .unwrap()
}

fn counterexample_config(seed: u64) -> String {
    format!(
        r#"{{
  "experiment": "counterexample",
  "master_seed": {seed},
  "params": {{ "n_values": [4, 16], "paths": 20 }}
}}"#
    )
}

#[test]
fn list_prints_the_catalog_and_exits_zero() {
    let out = run(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in splitsde_cli::catalog::KINDS {
        assert!(text.contains(kind), "catalog must mention {kind}");
    }
}

#[test]
fn every_catalog_kind_is_accepted_by_the_config_parser() {
    // Round-trip: the parser recognizes exactly the names the catalog lists.
    for kind in splitsde_cli::catalog::KINDS {
        let config = format!(
            r#"{{"experiment": "{kind}", "master_seed": 1, "params": {{}}}}"#
        );
        match splitsde_cli::parse_config(&config) {
            // Parameter blocks are incomplete, so kinds must fail on their
            // parameters, never on the kind name itself.
            Err(splitsde_cli::CliError::Config(msg)) => {
                assert!(
                    !msg.contains("unknown experiment kind"),
                    "{kind} must be a known kind, got: {msg}"
                );
            }
            Err(other) => panic!("unexpected error class for {kind}: {other}"),
            Ok(_) => {}
        }
    }
    assert!(matches!(
        splitsde_cli::parse_config(r#"{"experiment": "nope", "master_seed": 1, "params": {}}"#),
        Err(splitsde_cli::CliError::Config(msg)) if msg.contains("unknown experiment kind")
    ));
}

#[test]
fn passing_run_exits_zero_and_writes_summary_and_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, &counterexample_config(7));
    let out_dir = dir.path().join("results");
    let out = run(&[
        "run",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "counterexample");
    assert_eq!(summary["master_seed"], 7);
    let criteria = summary["criteria"].as_array().unwrap();
    assert!(!criteria.is_empty());
    for row in criteria {
        assert!(row["pass"].as_bool().unwrap());
        assert!(row["measured"].is_number());
        assert!(row["tolerance"].is_number());
    }
    // The mean terminal ratio is e to machine precision.
    let mean_ratio = criteria[0]["measured"].as_f64().unwrap();
    assert!((mean_ratio - std::f64::consts::E).abs() < 1e-12);

    let csv = std::fs::read_to_string(out_dir.join("counterexample.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "path,n,t,ratio,abs_error");
    assert_eq!(csv.lines().count(), 1 + 20 * 2);

    // stdout carries the summary JSON (data); stderr carries diagnostics.
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout["experiment"], "counterexample");
    assert!(String::from_utf8_lossy(&out.stderr).contains("running counterexample"));
}

#[test]
fn config_errors_exit_two_without_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("results");

    // Unknown field.
    let config = dir.path().join("bad_field.json");
    write(
        &config,
        r#"{"experiment": "counterexample", "master_seed": 1,
           "params": { "n_values": [4], "paths": 20, "bogus": 1 }}"#,
    );
    let out = run(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists(), "no outputs on config error");

    // Physically invalid parameter.
    let config = dir.path().join("bad_lambda.json");
    write(
        &config,
        r#"{"experiment": "sse-martingale", "master_seed": 1,
           "params": {"lambda": -1.0, "horizon": 0.5, "grid_half_width": 8.0,
                      "grid_points": 64, "sigma": 0.5, "n_values": [8], "paths": 10}}"#,
    );
    let out = run(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("lambda"), "diagnostic names the bad field: {msg}");
    assert!(!out_dir.exists());

    // Non-dyadic step count.
    let config = dir.path().join("bad_n.json");
    write(
        &config,
        r#"{"experiment": "counterexample", "master_seed": 1,
           "params": { "n_values": [6], "paths": 20 }}"#,
    );
    let out = run(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    // Missing file.
    let out = run(&["run", dir.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_config_and_seed_give_byte_identical_outputs_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // A kind that actually exercises parallel reductions.
    write(
        &config,
        r#"{"experiment": "sse-martingale", "master_seed": 33,
           "params": {"lambda": 1.0, "horizon": 0.25, "grid_half_width": 8.0,
                      "grid_points": 128, "sigma": 0.5, "n_values": [16],
                      "paths": 60}}"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let out_c = dir.path().join("c");
    assert_eq!(
        run(&["run", config.to_str().unwrap(), "--out", out_a.to_str().unwrap(), "--threads", "1"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run(&["run", config.to_str().unwrap(), "--out", out_b.to_str().unwrap(), "--threads", "4"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run_with_env(
            &["run", config.to_str().unwrap(), "--out", out_c.to_str().unwrap()],
            "SPLITSDE_THREADS",
            "2",
        )
        .status
        .code(),
        Some(0)
    );
    for name in ["summary.json", "martingale.csv", "trajectory.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        let c = std::fs::read(out_c.join(name)).unwrap();
        assert_eq!(a, b, "{name} must not depend on worker count");
        assert_eq!(a, c, "{name} must not depend on worker count");
    }
}

#[test]
fn criterion_failures_exit_one_but_still_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // An impossible tolerance forces a criterion failure on healthy data.
    write(
        &config,
        r#"{"experiment": "counterexample", "master_seed": 7,
           "params": { "n_values": [4], "paths": 20, "tolerance": 1e-30 }}"#,
    );
    let out_dir = dir.path().join("results");
    let out = run(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("counterexample.csv").exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("criterion failed"));
}

#[test]
fn invalid_thread_settings_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, &counterexample_config(1));
    let out = run(&["run", config.to_str().unwrap(), "--threads", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_with_env(&["run", config.to_str().unwrap()], "SPLITSDE_THREADS", "soup");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_aggregates_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, &counterexample_config(1));
    let out_dir = dir.path().join("sweep");

    // Fewer than two seeds is a config error.
    let out = run(&["sweep", config.to_str().unwrap(), "--seeds", "5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = run(&[
        "sweep",
        config.to_str().unwrap(),
        "--seeds",
        "5,6,7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("sweep_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 3);
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 3);
    for seed in [5, 6, 7] {
        assert!(out_dir.join(format!("seed-{seed}")).join("summary.json").exists());
    }
    let aggregate = summary["aggregate"].as_array().unwrap();
    assert!(!aggregate.is_empty());
    // Aggregated mean equals the arithmetic mean of the per-seed values.
    let per_seed = summary["per_seed"].as_array().unwrap();
    let values: Vec<f64> = per_seed
        .iter()
        .map(|s| s["criteria"][0]["measured"].as_f64().unwrap())
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!((aggregate[0]["mean_measured"].as_f64().unwrap() - mean).abs() <= 1e-15);
    assert!(aggregate.iter().all(|a| a["all_pass"].as_bool().unwrap()));
}

#[test]
fn sweep_with_identical_seeds_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(&config, &counterexample_config(9));
    let out_dir = dir.path().join("sweep");
    let out = run(&[
        "sweep",
        config.to_str().unwrap(),
        "--seeds",
        "4,4",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("sweep_summary.json")).unwrap())
            .unwrap();
    for row in summary["aggregate"].as_array().unwrap() {
        assert_eq!(row["stddev_measured"].as_f64().unwrap(), 0.0);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write(
        &config,
        r#"{"experiment": "lindblad-check", "master_seed": 12,
           "params": {"lambda": 1.0, "horizon": 0.5, "grid_half_width": 8.0,
                      "grid_points": 128, "sigma": 0.5, "paths": 40, "n": 8,
                      "pairs": [[0.5, 0.0]]}}"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(&["run", config.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["summary.json", "lindblad.csv"] {
        assert_eq!(
            std::fs::read(out_a.join(name)).unwrap(),
            std::fs::read(out_b.join(name)).unwrap()
        );
    }
}

#[test]
fn out_dir_falls_back_to_the_config_hint() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let hinted = dir.path().join("hinted");
    write(
        &config,
        &format!(
            r#"{{"experiment": "counterexample", "master_seed": 2,
               "out_dir": "{}",
               "params": {{ "n_values": [4], "paths": 10 }}}}"#,
            hinted.display()
        ),
    );
    let out = run(&["run", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(hinted.join("summary.json").exists());
}
