//! End-to-end tests of the `sslhs` binary: exit codes, artifact layout,
//! determinism of traces and CSVs, and the black-box line protocol.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sslhs::driver::RunTrace;
use sslhs::harness::{read_csv, Method};
use sslhs::models::{Model, ModelSpec, Ridge};
use sslhs::sampling::RngStream;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sslhs")
}

fn run_cmd(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).env_remove("SSLHS_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "p2",
            "--dprime",
            "2",
            "--d",
            "2",
            "--stages",
            "6",
            "--nbar",
            "50",
            "--seed",
            "7",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = stdout_of(&out);
    assert!(stdout.contains("estimate="));
    assert!(stdout.contains("N=1050"));

    let trace_path = dir.path().join("p2-seed7-trace.json");
    let trace: RunTrace =
        serde_json::from_str(&fs::read_to_string(&trace_path).unwrap()).unwrap();
    assert_eq!(trace.stages.len(), 6);
    assert_eq!(trace.total_samples, 1050);
    let weight_sum: f64 = trace.weights.iter().sum();
    assert!((weight_sum - 1.0).abs() < 1e-12);
    // The partial file is promoted to the final trace on success.
    assert!(!dir.path().join("p2-seed7-trace.partial.jsonl").exists());
}

#[test]
fn malformed_config_exits_2_without_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let out_flag = dir.path().to_str().unwrap().to_string();

    let out = run_cmd(&["run", "--problem", "p9", "--out", &out_flag], &[]);
    assert_eq!(out.status.code(), Some(2));

    let config = dir.path().join("bad.toml");
    fs::write(&config, "[model]\nkind = \"p1\"\na = 0.3\ndelta = 1.0\nbogus = 1\n").unwrap();
    let out = run_cmd(
        &["run", "--config", config.to_str().unwrap(), "--out", &out_flag],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    // Inconsistent geometry caught before any sampling.
    let out = run_cmd(
        &["run", "--problem", "p2", "--dprime", "5", "--d", "2", "--out", &out_flag],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));

    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name())
        .filter(|n| n != "bad.toml")
        .collect();
    assert!(leftovers.is_empty(), "unexpected artifacts: {leftovers:?}");
}

#[test]
fn identical_runs_produce_identical_bytes() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "--problem".into(),
            "p1".into(),
            "--delta".into(),
            "0.1".into(),
            "--stages".into(),
            "8".into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    for dir in [dir_a.path(), dir_b.path()] {
        let out = Command::new(bin()).args(args(dir)).output().unwrap();
        assert!(out.status.success());
    }
    let a = fs::read(dir_a.path().join("p1-seed42-trace.json")).unwrap();
    let b = fs::read(dir_b.path().join("p1-seed42-trace.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identical_studies_produce_identical_csv_bytes() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [dir_a.path(), dir_b.path()] {
        let out = run_cmd(
            &[
                "convergence",
                "--problem",
                "p1",
                "--delta",
                "1",
                "--schedule",
                "2,3",
                "--reps",
                "3",
                "--seed",
                "9",
                "--out",
                dir.to_str().unwrap(),
            ],
            &[],
        );
        assert!(out.status.success(), "{out:?}");
    }
    let a = fs::read(dir_a.path().join("p1-convergence.csv")).unwrap();
    let b = fs::read(dir_b.path().join("p1-convergence.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn convergence_emits_readable_csv_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "convergence",
            "--problem",
            "p1",
            "--delta",
            "1",
            "--schedule",
            "2,4",
            "--reps",
            "4",
            "--seed",
            "3",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = stdout_of(&out);
    assert!(stdout.contains("slope SS-LHS-gPC"));
    assert!(stdout.contains("slope LHS"));
    assert!(stdout.contains("slope SMC"));

    let records = read_csv(
        fs::read_to_string(dir.path().join("p1-convergence.csv"))
            .unwrap()
            .as_bytes(),
    )
    .unwrap();
    // 3 methods x 2 budget points.
    assert_eq!(records.len(), 6);
    assert_eq!(records[0].method, Method::SsLhsGpc);
    assert_eq!(records[0].n, 150);
    assert!(records.iter().all(|r| r.r == 4));
}

#[test]
fn method_subset_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "convergence",
            "--problem",
            "p2",
            "--schedule",
            "2",
            "--reps",
            "3",
            "--methods",
            "LHS",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let records = read_csv(
        fs::read_to_string(dir.path().join("p2-convergence.csv"))
            .unwrap()
            .as_bytes(),
    )
    .unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].method, Method::Lhs);
}

#[test]
fn report_round_trips_on_a_fresh_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "p3",
            "--dprime",
            "2",
            "--d",
            "4",
            "--stages",
            "4",
            "--seed",
            "2",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let trace = dir.path().join("p3-seed2-trace.json");
    let out = run_cmd(
        &["report", trace.to_str().unwrap(), "--full", "--sobol"],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = stdout_of(&out);
    assert!(stdout.contains("weights sum = "));
    assert!(stdout.contains("model p3"));
    assert!(stdout.contains("sobol contributions"));

    let out = run_cmd(&["report", "/nonexistent/file.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "p2",
            "--stages",
            "2",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[("SSLHS_SEED", "123")],
    );
    assert!(out.status.success(), "{out:?}");
    let trace: RunTrace = serde_json::from_str(
        &fs::read_to_string(dir.path().join("p2-seed123-trace.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(trace.config.seed, 123);

    // Explicit flag beats the environment.
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "p2",
            "--stages",
            "2",
            "--seed",
            "5",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[("SSLHS_SEED", "123")],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("p2-seed5-trace.json").exists());
}

#[test]
fn served_model_matches_in_process_evaluation() {
    let spec = ModelSpec::Blackbox {
        command: vec![
            bin().to_string(),
            "serve".into(),
            "--problem".into(),
            "p1".into(),
            "--a".into(),
            "0.3".into(),
            "--delta".into(),
            "1".into(),
        ],
        dim: 2,
    };
    let served = spec.build().unwrap();
    let local = Ridge { a: 0.3, delta: 1.0 };
    let mut stream = RngStream::derive(99, 0, 0);
    for _ in 0..1000 {
        let point = [stream.uniform01(), stream.uniform01()];
        let a = served.eval(&point).unwrap();
        let b = local.eval(&point).unwrap();
        assert!((a - b).abs() <= 1e-12, "served {a} vs local {b} at {point:?}");
    }
}

#[test]
fn blackbox_run_through_the_server_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = format!("{} serve --problem p1 --delta 1", bin());
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "blackbox",
            "--blackbox-cmd",
            &cmd,
            "--d",
            "2",
            "--stages",
            "3",
            "--seed",
            "4",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("blackbox-seed4-trace.json").exists());
}

#[test]
fn model_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "blackbox",
            "--blackbox-cmd",
            "sh -c while read line; do echo junk; done",
            "--d",
            "2",
            "--stages",
            "2",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    // Whitespace splitting mangles the shell script, so drive it from a file.
    assert_ne!(out.status.code(), Some(0));

    let script = dir.path().join("junk.sh");
    fs::write(&script, "#!/bin/sh\nwhile read line; do echo junk; done\n").unwrap();
    let cmd = format!("sh {}", script.display());
    let out = run_cmd(
        &[
            "run",
            "--problem",
            "blackbox",
            "--blackbox-cmd",
            &cmd,
            "--d",
            "2",
            "--stages",
            "2",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}
