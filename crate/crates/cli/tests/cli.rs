use std::path::Path;
use std::process::{Command, Output};

fn nodalab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nodalab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn report_without_stages_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nodalab(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dependency error"));
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[sweep]\nfreq = \"three\"\n").unwrap();
    let out = nodalab(dir.path(), &["config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sweep.freq"));
}

#[test]
fn divide_reports_the_exact_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let out = nodalab(dir.path(), &["divide"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("divide/report.json")).unwrap();
    assert!(report.contains("17/18"));
    let merged = nodalab(dir.path(), &["report"]);
    assert_eq!(merged.status.code(), Some(0));
    assert!(dir.path().join("report/registry.csv").is_file());
}

#[test]
fn nodal_length_of_a_square_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("nodal.toml");
    std::fs::write(
        &cfg,
        "modes = []\nmesh_h = 0.00390625\n\n[[closed_forms]]\nname = \"square_mode\"\nk = 3\nm = 2\n",
    )
    .unwrap();
    let out = nodalab(dir.path(), &["nodal", "--config", cfg.to_str().unwrap()]);
    assert!(
        matches!(out.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rd = csv::Reader::from_path(dir.path().join("nodal/lengths.csv")).unwrap();
    let headers = rd.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "total_length").unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let len: f64 = rows[0][col].parse().unwrap();
    assert!((len - 3.0).abs() / 3.0 < 0.01, "length {len}");
}
