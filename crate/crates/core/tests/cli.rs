//! End-to-end runs of the `semiblind` binary.

use std::path::Path;
use std::process::{Command, Output};

use semiblind::estimators::Method;
use semiblind::harness::{parse_csv, parse_json, COLUMNS};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiblind"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: [&str; 8] = ["--gain", "32", "--block-len", "60", "--trials", "3", "--draws", "5"];

#[test]
fn predict_writes_one_row_per_estimator() {
    let out = run(&["predict", "--draws", "10"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let records = parse_csv(&out.stdout[..]).unwrap();
    let methods: Vec<_> = records.iter().map(|r| r.estimator).collect();
    assert_eq!(methods, Method::ALL.to_vec());
    let header = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    assert_eq!(header, COLUMNS.join(","));
}

#[test]
fn sweep_to_json_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let mut args = vec!["sweep", "--beta", "0.25,0.5", "--format", "json", "--out", path.to_str().unwrap()];
    args.extend(SMALL);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let records = parse_json(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 6);
    for m in Method::ALL {
        assert_eq!(records.iter().filter(|r| r.estimator == m).count(), 2);
    }
    assert!(records.iter().all(|r| r.trials == 3));
}

#[test]
fn sweep_is_reproducible_across_workers() {
    let mut one = vec!["sweep", "-P", "2,3", "--workers", "1"];
    one.extend(SMALL);
    let mut two = one.clone();
    two[4] = "2";
    let a = run(&one);
    let b = run(&two);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(
        &cfg,
        "spreading_gain = 32\nblock_len = 60\nbeta = [0.25, 0.5]\nsigma_n2 = 1.0\nP = 2\nalpha = 0.2\nestimator = \"training\"\nanalytic_draws = 5\n",
    )
    .unwrap();
    let out = run(&["predict", "--config", cfg.to_str().unwrap(), "--beta", "0.75"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let records = parse_csv(&out.stdout[..]).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!((records[0].beta, records[0].order), (0.75, 2));
    assert_eq!(records[0].sigma_g2_ana, 5.0);
}

#[test]
fn failing_cells_are_summarized() {
    let mut args = vec!["sweep", "--alpha", "0.2,0.001"];
    args.extend(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("1 of 2 cells failed"), "{err}");
    assert!(err.contains("alpha=0.001"), "{err}");
    // The healthy cell is still written.
    assert_eq!(parse_csv(&out.stdout[..]).unwrap().len(), 3);
}

#[test]
fn all_cells_failing_leaves_header_only() {
    let mut args = vec!["sweep", "--alpha", "0.001"];
    args.extend(SMALL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(String::from_utf8_lossy(&out.stdout), format!("{}\n", COLUMNS.join(",")));
}

#[test]
fn simulate_reports_diagnostics() {
    let mut args = vec!["simulate", "--estimator", "all"];
    args.extend(SMALL);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("mean iterations"), "{err}");
    assert!(err.contains("omega rule"), "{err}");
    assert_eq!(parse_csv(&out.stdout[..]).unwrap().len(), 3);
}

#[test]
fn usage_errors_exit_nonzero() {
    let multi = run(&["simulate", "--beta", "0.25,0.5"]);
    assert_eq!(multi.status.code(), Some(2));
    assert!(stderr(&multi).contains("single cell"));

    let missing = run(&["predict", "--config", "/nonexistent/grid.toml"]);
    assert_eq!(missing.status.code(), Some(2));

    let bad_flag = run(&["sweep", "--sos-mode", "exact"]);
    assert!(!bad_flag.status.success());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "betta = 0.5\n").unwrap();
    let unknown = run(&["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(!Path::new(&cfg).with_extension("csv").exists());
}
