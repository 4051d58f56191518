//! End-to-end tests of the `rt-action` binary: exit codes, artifact layout,
//! determinism, and the verification report format.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rt-action"))
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn solve_then_verify_default_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let out = run(&["solve", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for name in ["config.cfg", "u_eps_00.txt", "final.txt", "report.txt", "energy.csv"] {
        assert!(out_dir.join(name).exists(), "missing artifact {name}");
    }
    let out = run(&["verify", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let report = std::fs::read_to_string(out_dir.join("verify_report.txt")).unwrap();
    // Stable line format: name, value, bound, status.
    for line in report.lines() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(parts.len(), 4, "bad report line: {line}");
        assert!(parts[1].parse::<f64>().is_ok() && parts[2].parse::<f64>().is_ok());
        assert!(parts[3] == "pass" || parts[3] == "FAIL");
    }
    assert!(report.lines().count() >= 10);
    assert!(!report.contains("FAIL"), "unexpected failures:\n{report}");
}

#[test]
fn identical_config_and_seed_give_bit_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "[grid]\nNt = 16\nNx = 16\n[regularization]\neps_schedule = 0.2, 0.1\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = run(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["final.txt", "energy.csv", "report.txt", "config.cfg"] {
        let fa = std::fs::read(a.join(name)).unwrap();
        let fb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(fa, fb, "artifact {name} differs between identical runs");
    }
}

#[test]
fn malformed_config_exits_one_with_line_anchor() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "[grid]\nNt = 1\nNx = 8\n");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let cfg = write_cfg(tmp.path(), "[grid]\nNt = twelve\n");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("line 2"),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_command_and_missing_artifacts_exit_one() {
    let out = run(&["frobnicate"]);
    assert_eq!(code(&out), 1);
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["verify", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
}

#[test]
fn corrupted_field_dump_fails_verification_with_named_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("run");
    let cfg = write_cfg(
        tmp.path(),
        "[grid]\nNt = 16\nNx = 16\n[regularization]\neps_schedule = 0.2, 0.1\n",
    );
    let out = run(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let final_path = out_dir.join("final.txt");
    let text = std::fs::read_to_string(&final_path).unwrap();
    // Swap one interior value for a NaN; the dump still parses.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut row: Vec<&str> = lines[2].split_whitespace().collect();
    row[2] = "NaN";
    lines[2] = row.join(" ");
    std::fs::write(&final_path, lines.join("\n") + "\n").unwrap();
    let out = run(&["verify", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    let report = std::fs::read_to_string(out_dir.join("verify_report.txt")).unwrap();
    assert!(report.contains("field_finite"), "{report}");
    assert!(report.contains("FAIL"), "{report}");
}

#[test]
fn check_potential_accepts_example_and_flags_conservative() {
    let out = run(&["check-potential"]);
    assert_eq!(code(&out), 0, "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "[potential]\nname = linear\n");
    let out = run(&["check-potential", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "stdout: {}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn oracle_agrees_on_tiny_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "[grid]\nNt = 4\nNx = 4\n[regularization]\neps_schedule = 0.2\n",
    );
    let out = run(&["oracle", "--config", cfg.to_str().unwrap(), "--seed", "2024"]);
    assert_eq!(code(&out), 0, "stdout: {}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn sweep_single_t_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("sweep");
    // Default grid and schedule: the start/end kinetic rates only agree once
    // the regularization is driven down, so a coarse short schedule fails.
    let cfg = write_cfg(tmp.path(), "[sweep]\nT_list = 1\n");
    let out = run(&[
        "sweep-T",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("sweep_T.csv")).unwrap();
    assert_eq!(table.lines().count(), 2, "{table}");
    assert!(table.starts_with("T,c_start,c_end,bound,"));
}
