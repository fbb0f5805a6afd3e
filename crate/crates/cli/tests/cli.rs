use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 12] = [
    "--set",
    "n_users=10",
    "--set",
    "n_preambles=8",
    "--set",
    "n_subchannels=4",
    "--set",
    "n_elements=64",
    "--set",
    "n_cascade_samples=150",
    "--set",
    "n_outer_samples=30",
];

fn risra(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risra")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_then_simulate_from_solution() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    let csv = dir.path().join("out.csv");
    let mut args = vec!["solve", "--out", path(&sol)];
    args.extend(SMALL);
    let out = risra(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&sol).unwrap()).unwrap();
    assert!(json["lambda_star"].as_f64().unwrap() > 0.0);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 16);

    for _ in 0..2 {
        let mut args = vec![
            "simulate",
            "--frames",
            "300",
            "--solution",
            path(&sol),
            "--out",
            path(&csv),
        ];
        args.extend(SMALL);
        let out = risra(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("strategy,"));
    assert_eq!(lines[1], lines[2]);
}

#[test]
fn mismatched_solution_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sol = dir.path().join("sol.json");
    let mut args = vec!["solve", "--strategy", "optstop_fullarray", "--out", path(&sol)];
    args.extend(SMALL);
    assert!(risra(&args).status.success());
    let mut args = vec!["simulate", "--frames", "10", "--solution", path(&sol)];
    args.extend(SMALL);
    assert_eq!(risra(&args).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(risra(&["simulate", "--set", "n_userz=3"]).status.code(), Some(2));
    assert_eq!(risra(&["simulate", "--strategy", "proposed"]).status.code(), Some(2));
    assert_eq!(risra(&["simulate", "--strategy", "bogus"]).status.code(), Some(2));
    assert_eq!(risra(&["solve", "--set", "n_elements=100"]).status.code(), Some(2));
    assert_eq!(
        risra(&["solve", "--set", "coherence_time_s=0.001"]).status.code(),
        Some(2)
    );
    assert_eq!(risra(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(risra(&["--help"]).status.code(), Some(0));
}

#[test]
fn baselines_simulate_without_threshold() {
    let mut args = vec![
        "simulate",
        "--strategy",
        "direct_ris_full",
        "--frames",
        "200",
        "--seed",
        "3",
    ];
    args.extend(SMALL);
    let out = risra(&args);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("direct_ris_full,26.0,0.024,64,200,"));
}

#[test]
fn validate_passes_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    let mut args = vec!["validate", "--seed", "5", "--manifest", path(&manifest)];
    args.extend(SMALL);
    let out = risra(&args);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.starts_with("seed 5\n"));
    assert!(!stdout.contains("FAIL"));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "validate");
    assert_eq!(m["seed"], 5);
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "n_users = 4\nn_preambles = 4\nn_subchannels = 2\nn_elements = 16\nn_cascade_samples = 50\nn_outer_samples = 10\n",
    )
    .unwrap();
    let out = risra(&[
        "simulate",
        "--config",
        path(&cfg),
        "--set",
        "tx_power_dbm=30",
        "--strategy",
        "direct_only",
        "--frames",
        "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("direct_only,30.0,0.024,16,50,"));
}
