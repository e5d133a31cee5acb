//! End-to-end tests of the `remeta` binary: exit codes, format outputs,
//! error messages, and byte-level determinism of the simulation CSV.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_remeta"))
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/hinks2010.csv")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, content).unwrap();
    p
}

#[test]
fn analyze_table_on_fixture() {
    let out = bin()
        .args(["analyze", "--input"])
        .arg(fixture())
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("estimator") && l.ends_with("DL")));
    assert!(text.lines().any(|l| l.starts_with("tau2_hat") && l.ends_with('0')));
    let mkh_upper: f64 = text
        .lines()
        .find(|l| l.starts_with("ci_mkh_upper"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!(mkh_upper > 0.0, "mKH upper bound should cross zero");
    let hksj_upper: f64 = text
        .lines()
        .find(|l| l.starts_with("ci_hksj_upper"))
        .and_then(|l| l.split_whitespace().last())
        .unwrap()
        .parse()
        .unwrap();
    assert!(hksj_upper < 0.0, "HKSJ interval should exclude zero");
}

#[test]
fn analyze_json_and_estimator_selection() {
    for est in ["dl", "reml", "pm"] {
        let out = bin()
            .args(["analyze", "--estimator", est, "--format", "json", "--input"])
            .arg(fixture())
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let text = stdout(&out);
        assert!(text.trim_start().starts_with('{'));
        assert!(text.contains(&format!("\"estimator\": \"{}\"", est.to_uppercase())));
        assert!(text.contains("\"tau2_hat\": 0"));
    }
}

#[test]
fn analyze_forest_structure_and_determinism() {
    let run = || {
        let out = bin()
            .args(["analyze", "--format", "forest", "--input"])
            .arg(fixture())
            .output()
            .unwrap();
        assert!(out.status.success());
        stdout(&out)
    };
    let a = run();
    let b = run();
    assert_eq!(a, b, "forest output must be deterministic");
    for label in ["Study 1", "NORMAL", "HKSJ", "MKH"] {
        assert!(a.contains(label));
    }
}

#[test]
fn analyze_usage_errors_exit_2() {
    let cases: Vec<Vec<String>> = vec![
        vec!["analyze".into(), "--input".into(), fixture().display().to_string(), "--estimator".into(), "mle".into()],
        vec!["analyze".into(), "--input".into(), fixture().display().to_string(), "--format".into(), "xml".into()],
        vec!["analyze".into(), "--input".into(), fixture().display().to_string(), "--alpha".into(), "1.0".into()],
        vec!["analyze".into(), "--input".into(), fixture().display().to_string(), "--alpha".into(), "0".into()],
    ];
    for args in cases {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {}", stderr(&out));
        assert!(!stderr(&out).is_empty());
    }
}

#[test]
fn analyze_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();

    let out = bin()
        .args(["analyze", "--input", "/definitely/not/here.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot read"));

    let bad_header = write_tmp(&dir, "bad_header.csv", "label,y,se\na,0.1,0.5\n");
    let out = bin().args(["analyze", "--input"]).arg(&bad_header).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("label,estimate,stderr"));

    let bad_row = write_tmp(
        &dir,
        "bad_row.csv",
        "label,estimate,stderr\na,0.1,0.5\nb,0.2,-1\n",
    );
    let out = bin().args(["analyze", "--input"]).arg(&bad_row).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "got: {}", stderr(&out));

    let single = write_tmp(&dir, "single.csv", "label,estimate,stderr\nonly,0.1,0.5\n");
    let out = bin().args(["analyze", "--input"]).arg(&single).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("at least 2"),
        "error should advise needing two studies: {}",
        stderr(&out)
    );
}

#[test]
fn simulate_writes_expected_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("grid.csv");
    let out = bin()
        .args([
            "simulate",
            "--scenarios",
            "A",
            "--k",
            "3..4",
            "--i2",
            "0,0.5",
            "--estimators",
            "dl",
            "--reps",
            "50",
            "--seed",
            "42",
        ])
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&out_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "scenario,k,i2,estimator,reps,seed,cov_normal,cov_hksj,cov_mkh,mc_se_hksj,mean_len_ratio,frac_q_lt_1,mean_tau2_hat"
    );
    assert_eq!(lines.len(), 1 + 4, "2 k values x 2 i2 values, one estimator");
    assert!(lines[1].starts_with("A,3,0,DL,50,42,"));
    assert!(lines[2].starts_with("A,3,0.5,DL,50,42,"));
    assert!(lines[3].starts_with("A,4,0,DL,50,42,"));
    assert!(lines[4].starts_with("A,4,0.5,DL,50,42,"));
}

#[test]
fn simulate_same_seed_is_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, threads) in [("a.csv", "1"), ("b.csv", "4"), ("c.csv", "2")] {
        let path = dir.path().join(name);
        let out = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args([
                "simulate",
                "--scenarios",
                "B,A",
                "--k",
                "2..3",
                "--i2",
                "0.25,0",
                "--estimators",
                "pm,dl",
                "--reps",
                "60",
                "--seed",
                "7",
            ])
            .arg("--out")
            .arg(&path)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "1 vs 4 worker threads");
    assert_eq!(outputs[0], outputs[2], "1 vs 2 worker threads");
}

#[test]
fn simulate_usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.csv").display().to_string();
    let cases = [
        vec!["simulate", "--k", "1", "--out", &out_path],
        vec!["simulate", "--k", "5..3", "--out", &out_path],
        vec!["simulate", "--k", "abc", "--out", &out_path],
        vec!["simulate", "--i2", "1.0", "--out", &out_path],
        vec!["simulate", "--i2", "-0.5", "--out", &out_path],
        vec!["simulate", "--scenarios", "E", "--out", &out_path],
        vec!["simulate", "--estimators", "mom", "--out", &out_path],
        vec!["simulate", "--reps", "0", "--out", &out_path],
        vec!["simulate", "--alpha", "1.2", "--out", &out_path],
    ];
    for args in cases {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "args {args:?}: {}", stderr(&out));
    }
    // Usage failure must not leave an artifact behind.
    assert!(!Path::new(&out_path).exists());
}

#[test]
fn simulate_unwritable_output_exits_1() {
    let out = bin()
        .args([
            "simulate",
            "--scenarios",
            "A",
            "--k",
            "2",
            "--i2",
            "0",
            "--estimators",
            "dl",
            "--reps",
            "5",
            "--out",
            "/no/such/directory/grid.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("cannot write"));
}

#[test]
fn missing_subcommand_or_flags_exit_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["analyze"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing --input");
    let out = bin().args(["simulate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "missing --out");
}
