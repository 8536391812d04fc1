//! End-to-end tests of the binary: exit codes, error wording, emitted
//! files, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn renewal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

const STEADY_CFG: &str = "\
experiment = steady
rate.kind = constant
rate.value = 1.0
grid.N = 1
grid.M = 60
grid.h = 0.1
solver.dt = 0.1
solver.t_end = 1.0
";

#[test]
fn parse_error_names_file_and_line_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    write(&cfg, "experiment = steady\nthis line has no equals sign\n");
    let out = renewal(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bad.cfg:2"), "stderr was: {msg}");
}

#[test]
fn mismatched_dt_is_a_validation_error_naming_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dt.cfg");
    write(&cfg, &STEADY_CFG.replace("solver.dt = 0.1", "solver.dt = 0.2"));
    let out = renewal(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("solver.dt = grid.h"), "stderr was: {msg}");
}

#[test]
fn steady_run_emits_reports_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("steady.cfg");
    write(&cfg, STEADY_CFG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = renewal(&[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("PASS steady iteration converged"));
        assert!(text.contains("PASS steady state matches the analytic law"));
    }
    for name in ["report.csv", "marginal.csv", "steady.rnwl"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    assert!(out_a.join("run.log").exists());
}

#[test]
fn verify_all_on_an_empty_directory_succeeds_with_a_bare_summary() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    let out_root = dir.path().join("out");
    fs::create_dir(&configs).unwrap();
    let out = renewal(&[
        "verify-all",
        "--config",
        configs.to_str().unwrap(),
        "--out",
        out_root.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(out_root.join("summary.csv")).unwrap();
    assert_eq!(summary, "config,experiment,passed,failed,status\n");
}

#[test]
fn verify_all_marks_failures_and_exits_nonzero_without_aborting() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    let out_root = dir.path().join("out");
    fs::create_dir(&configs).unwrap();
    write(&configs.join("good.cfg"), STEADY_CFG);
    // The tail norm grows faster than the rate-bound constant shrinks,
    // so the trend assertion fails by closed-form arithmetic.
    write(
        &configs.join("grows.cfg"),
        "experiment = uniform-limit\nrate.kind = geometric\nrate.first = 1.0\n\
         rate.ratio = 0.6\nlimit.n_list = 2, 4, 6, 8\n",
    );
    write(&configs.join("broken.cfg"), "experiment = nonsense\n");
    let out = renewal(&[
        "verify-all",
        "--config",
        configs.to_str().unwrap(),
        "--out",
        out_root.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let summary = fs::read_to_string(out_root.join("summary.csv")).unwrap();
    assert!(summary.contains("good,steady,2,0,pass"), "summary: {summary}");
    assert!(summary.contains("grows,uniform-limit,0,1,fail"), "summary: {summary}");
    assert!(summary.contains("broken,?,0,0,error"), "summary: {summary}");
}
