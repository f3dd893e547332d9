use std::fs;
use std::process::Command;

use tempfile::tempdir;

const HEADER: &str = "run_seed,t,f_m,sigma,det_C,tr_normalized,kappa_HC,f_mu,success";

fn hees() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hees"))
}

#[test]
fn version_prints_package_version() {
    let out = hees().arg("version").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), format!("hees {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn validate_accepts_good_config_and_rejects_bad_ones() {
    let dir = tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    fs::write(&good, "algorithm=one_plus_four\nproblem=ellipsoid\nd=10\ncondition=1e6\nbudget=5000\nseeds=1,2,3\n").unwrap();
    assert_eq!(hees().arg("validate").arg(&good).status().unwrap().code(), Some(0));

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "budget=0\n").unwrap();
    let out = hees().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));

    let missing = dir.path().join("missing.cfg");
    assert_eq!(hees().arg("validate").arg(&missing).status().unwrap().code(), Some(1));
    assert_eq!(hees().args(["run", bad.to_str().unwrap()]).status().unwrap().code(), Some(1));
}

#[test]
fn run_writes_deterministic_csv_regardless_of_threads() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "algorithm=he_es\nproblem=ellipsoid\nd=4\ncondition=100\nbudget=30\nseeds=3,1,2\n").unwrap();
    let mut files = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let status = hees()
            .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--parallel", threads])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        files.push(fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[1], files[2]);
    let text = String::from_utf8(files.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 1 + 3 * 30);
    assert!(lines[1].starts_with("3,1,"));
    assert!(lines[31].starts_with("1,1,"));
}

#[test]
fn run_to_stdout_and_median_aggregation() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "algorithm=one_plus_four\nd=3\nbudget=5\nseeds=0..5\n").unwrap();
    let out = hees().args(["run", cfg.to_str().unwrap(), "--aggregate", "median"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.starts_with("median,")));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "algorithm=one_plus_one\nd=3\nbudget=5\nseeds=1\n").unwrap();
    let out = dir.path().join("no/such/dir/out.csv");
    let status = hees()
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
