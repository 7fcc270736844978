use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tiltfit::archive::ResultsArchive;
use tiltfit::boston::HOUSING_COLUMNS;
use tiltfit::ingest::{expand_interactions, ingest_csv};
use tiltfit::render::from_csv;
use tiltfit::CliError;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/housing_30.csv")
}

fn tiltfit(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tiltfit")).args(args).output().expect("binary runs");
    (
        out.status.code().expect("exited normally"),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p.to_str().unwrap().to_string()
}

const SIM_CONFIG: &str = r#"version = 1

[experiment]
kind = "exp1"
n = 50
p = 7
rho = 0.3
reps = 6
seed = 3
methods = ["pet", "mean", "st"]
threads = 2

[tuning]
grid_len = 10
"#;

#[test]
fn housing_fixture_ingests() {
    let d = ingest_csv(&fixture(), "MEDV", true).unwrap();
    assert_eq!((d.n(), d.covariates.ncols()), (30, 13));
    assert_eq!(d.labels, HOUSING_COLUMNS[..13].to_vec());
    let raw = ingest_csv(&fixture(), "MEDV", false).unwrap();
    for (l, r) in d.response.iter().zip(&raw.response) {
        assert!((l - r.ln()).abs() < 1e-12);
    }
    let (design, labels) = expand_interactions(&d.covariates, &d.labels, true).unwrap();
    assert_eq!(design.ncols(), 92);
    assert_eq!(labels.iter().collect::<HashSet<_>>().len(), 92, "labels are unique");
}

#[test]
fn toy_csv_and_log_response() {
    let dir = tempfile::tempdir().unwrap();
    let e = std::f64::consts::E;
    let p = write(dir.path(), "toy.csv", &format!("y,x1\n1,5\n{e},6\n{},7\n", e * e));
    let d = ingest_csv(Path::new(&p), "y", true).unwrap();
    assert_eq!((d.n(), d.covariates.ncols()), (3, 1));
    for (got, want) in d.response.iter().zip([0.0, 1.0, 2.0]) {
        assert!((got - want).abs() < 1e-12);
    }
}

#[test]
fn ingest_errors_name_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.csv", "y,x1\n1,2\n3,oops\n");
    let err = ingest_csv(Path::new(&p), "y", false).unwrap_err();
    assert!(matches!(err, CliError::Data(_)));
    let msg = err.to_string();
    assert!(msg.contains("line 3") && msg.contains("column 2") && msg.contains("oops"), "{msg}");
    let err = ingest_csv(Path::new(&p), "MEDV", false).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mean = write(dir.path(), "mean.csv", "a,b\n0.9,0.1\n1.2,-0.3\n1.0,0.4\n0.8,0.0\n1.1,-0.1\n");
    let (code, stdout, _) = tiltfit(&["fit", "--input", &mean, "--model", "mean", "--gamma", "0"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("| a | 1.000 |"), "{stdout}");

    let bad = write(dir.path(), "bad.toml", &format!("{SIM_CONFIG}colour = \"red\"\n"));
    assert_eq!(tiltfit(&["simulate", "--config", &bad]).0, 2);
    assert_eq!(tiltfit(&["test", "--input", &mean, "--model", "mean", "--contrast", "k=1"]).0, 2);
    assert_eq!(tiltfit(&["fit", "--input", &mean, "--model", "mean", "--gamma", "-1"]).0, 2);

    let (code, _, stderr) = tiltfit(&["boston", "--input", fixture().to_str().unwrap()]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("collinear"), "{stderr}");
    assert_eq!(tiltfit(&["fit", "--input", "/nonexistent.csv", "--model", "mean"]).0, 3);

    // four indicators, three rows: every structural fit on the path diverges
    let sem = write(dir.path(), "sem.csv", "a,b,c,d\n1,2,3,4\n2,1,0,5\n0,0,1,1\n");
    assert_eq!(tiltfit(&["fit", "--input", &sem, "--model", "sem"]).0, 4);
}

#[test]
fn test_and_interval_commands() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..40).map(|i| format!("{},{}\n", 1.0 + ((i * 7) % 11) as f64 / 10.0, ((i * 5) % 9) as f64 / 10.0 - 0.4)).collect();
    let data = write(dir.path(), "d.csv", &format!("a,b\n{rows}"));
    let (code, stdout, stderr) = tiltfit(&["test", "--input", &data, "--model", "mean", "--contrast", "j=1", "--value", "0", "--gamma", "0"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("statistic"));
    let (code, stdout, stderr) = tiltfit(&["ci", "--input", &data, "--model", "mean", "--coef", "1", "--gamma", "0", "--format", "text"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("lower"));
}

#[test]
fn simulate_writes_reproducible_archive() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exp.toml", SIM_CONFIG);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let (code, _, stderr) = tiltfit(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{stderr}");
    }
    for name in ["metrics.csv", "report.md", "fits.jsonl"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    let archive = ResultsArchive::load(&a).unwrap();
    assert!(archive.verify());
    let mut tampered = archive.clone();
    tampered.config["experiment"]["reps"] = 7.into();
    assert!(!tampered.verify());

    let metrics = from_csv("metrics", &fs::read_to_string(a.join("metrics.csv")).unwrap()).unwrap();
    // CSV files carry no title
    let mut stored = archive.table("metrics").unwrap().clone();
    stored.title = "metrics".into();
    assert_eq!(metrics, stored);
    assert_eq!(metrics.columns[..4], ["method", "RMS(theta1)", "RMS(theta2)", "RMS(theta3)"]);
    assert!(metrics.columns.contains(&"T".to_string()) && metrics.columns.contains(&"F".to_string()));
    assert_eq!(metrics.rows.len(), 3);
}

#[test]
fn coverage_command_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SIM_CONFIG.replace("reps = 6", "reps = 4") + "\n[coverage]\ntheta2 = [0.3, 0.6]\nalpha = 0.05\n";
    let cfg = write(dir.path(), "cov.toml", &cfg);
    let out = dir.path().join("cov");
    let (code, stdout, stderr) = tiltfit(&["coverage", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("Non-coverage"));
    let table = from_csv("coverage", &fs::read_to_string(out.join("coverage.csv")).unwrap()).unwrap();
    assert_eq!(table.rows.len(), 2);
}
