//! Black-box checks of the command-line interface: exit codes, output
//! files, manifest invariants, reproducibility, and the promise that the
//! input config is never modified.

use std::path::Path;
use std::process::{Command, Output};

const COLORED: &str = "\
n: 1
m: 1
N: 3
sigma2: 0.36
A0: [[0.8]]
A1: [[0.3]]
B0: [[1.0]]
B1: [[0.4]]
B2: [[0.5]]
Q: [[1.0]]
R: [[1.0]]
P_terminal: [[1.0]]
init: {x0: [1.0], w_prev: 0.6}
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_colored-lqr"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["solve", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    assert_eq!(
        run(&["solve", "--config", &cfg, "--bogus-flag"]).status.code(),
        Some(2)
    );
    let out = run(&["solve", "--config", "/definitely/not/there.yaml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not/there.yaml"), "{}", stderr(&out));
    let out = run(&["oracle", "--config", &cfg, "--method", "sorcery"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn white_mode_on_a_colored_instance_exits_two_naming_b2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let out = run(&["solve", "--config", &cfg, "--mode", "white"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("B2"), "stderr: {}", stderr(&out));
}

#[test]
fn indefinite_weights_exit_one_in_both_information_patterns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.yaml",
        &format!("{COLORED}allow_indefinite: true\n"),
    );
    let out = run(&["solve", "--config", &cfg, "--set", "R=[[-1.0]]"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("step") && err.contains("Upsilon_k > 0"), "{err}");

    let out = run(&[
        "solve", "--config", &cfg, "--set", "R=[[-1.0]]", "--set", "delay=1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("step") && err.contains("R_k > 0"), "{err}");
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = run(&[
            "simulate",
            "--config",
            &cfg,
            "--samples",
            "400",
            "--seed",
            "9",
            "--exact",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    }
    for name in ["estimate.csv", "trajectory.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // The estimate stays within a few standard errors of the exact value
    // printed alongside it.
    let text = std::fs::read_to_string(out_a.join("estimate.csv")).unwrap();
    assert!(text.starts_with("mean,stderr,n_samples,seed\n"), "{text}");
}

#[test]
fn manifest_lists_exactly_the_outputs_and_echoes_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "colored_case.yaml", COLORED);
    let before = std::fs::read(&cfg).unwrap();
    let out_dir = dir.path().join("run");
    let res = run(&[
        "compare",
        "--config",
        &cfg,
        "--set",
        "N=2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));

    let manifest = std::fs::read_to_string(out_dir.join("manifest.yaml")).unwrap();
    assert!(manifest.contains("command: compare"), "{manifest}");
    assert!(
        manifest.contains(&format!("version: {}", env!("CARGO_PKG_VERSION"))),
        "{manifest}"
    );
    assert!(manifest.contains("compare.csv"), "{manifest}");
    // The override is reflected in the echoed configuration, and the list
    // of outputs matches the directory contents besides the manifest.
    assert!(manifest.contains("N: 2"), "{manifest}");
    let mut listed: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|f| f != "manifest.yaml")
        .collect();
    listed.sort();
    for f in &listed {
        assert!(manifest.contains(f.as_str()), "manifest missing {f}: {manifest}");
    }
    // The instance id in the CSV comes from the config file stem.
    let csv = std::fs::read_to_string(out_dir.join("compare.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("colored_case,"), "{csv}");
    // The input config was not touched.
    assert_eq!(before, std::fs::read(&cfg).unwrap());
}

#[test]
fn solve_writes_a_schedule_that_simulate_accepts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let out_dir = dir.path().join("sol");
    let res = run(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    assert!(stdout(&res).contains("measurable"), "{}", stdout(&res));
    let sched = out_dir.join("schedule.yaml");
    assert!(sched.exists());

    let res = run(&[
        "simulate",
        "--config",
        &cfg,
        "--policy",
        sched.to_str().unwrap(),
        "--samples",
        "50",
        "--exact",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    assert!(stdout(&res).contains("exact expected cost"), "{}", stdout(&res));
}

#[test]
fn oracle_methods_agree_and_path_qp_exports_the_tree_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let dp = run(&["oracle", "--config", &cfg, "--method", "dp"]);
    assert_eq!(dp.status.code(), Some(0));
    let out_dir = dir.path().join("qp");
    let qp = run(&[
        "oracle", "--config", &cfg, "--method", "path-qp", "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(qp.status.code(), Some(0));

    let dp_val: f64 = stdout(&dp)
        .split(':')
        .nth(1)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    let qp_line = stdout(&qp);
    let qp_val: f64 = qp_line
        .split(':')
        .nth(1)
        .unwrap()
        .trim()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((dp_val - qp_val).abs() <= 1e-9 * (1.0 + dp_val.abs()));

    let policy = std::fs::read_to_string(out_dir.join("policy.csv")).unwrap();
    assert!(policy.starts_with("history,k,"), "{policy}");
    // One row for the root decision plus two per later step on this
    // two-point tree: 1 + 2 + 4 + 8 histories for N = 3.
    assert_eq!(policy.lines().count(), 1 + 15, "{policy}");
}

#[test]
fn verify_passes_healthy_configs_and_fails_broken_ones() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let good_dir = dir.path().join("good");
    let res = run(&["verify", "--config", &cfg, "--out", good_dir.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    assert!(stdout(&res).contains("all checks passed"));
    assert!(good_dir.join("verify.txt").exists());
    assert!(good_dir.join("manifest.yaml").exists());

    // An indefinite control weight breaks solvability; verify says so
    // with exit 1 but still writes its report and manifest.
    let bad = write_config(
        dir.path(),
        "bad.yaml",
        &format!(
            "{}allow_indefinite: true\n",
            COLORED.replace("R: [[1.0]]", "R: [[-1.0]]")
        ),
    );
    let bad_dir = dir.path().join("bad");
    let res = run(&["verify", "--config", &bad, "--out", bad_dir.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1), "{}", stdout(&res));
    assert!(stdout(&res).contains("FAIL"), "{}", stdout(&res));
    assert!(bad_dir.join("verify.txt").exists());
    assert!(bad_dir.join("manifest.yaml").exists());
}

#[test]
fn no_out_directory_means_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.yaml", COLORED);
    let work = dir.path().join("cwd");
    std::fs::create_dir(&work).unwrap();
    let res = bin()
        .args(["solve", "--config", &cfg])
        .current_dir(&work)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(std::fs::read_dir(&work).unwrap().count(), 0);
}
