use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rfkit::generators::ingest_matrix;
use rfkit::matrix::write_matrix;
use rfkit::DataMatrix;

fn rfkit(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfkit"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SINE_CONFIG: &str = r#"{
  "id": "iso",
  "experiment": "isometry",
  "dataset": {"kind": "sine", "f_c": 32, "samples": 40},
  "methods": ["rf", "lpf"],
  "ratios": [2, 4, 8],
  "seeds": 3,
  "metrics": ["delta"],
  "output_dir": "out"
}"#;

/// Data lines of a CSV with the wall-time column removed.
fn csv_body(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let timing = header.iter().position(|h| *h == "wall_time_ms").unwrap();
    lines
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.remove(timing);
            fields.join(",")
        })
        .collect()
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfkit(&["isometry"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn unknown_subcommand_and_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rfkit(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(rfkit(&["scaling", "--config", "x.json", "--bogus"], dir.path()).status.code(), Some(1));
}

#[test]
fn missing_config_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfkit(&["isometry", "--config", "nope.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.json"));
}

#[test]
fn compress_produces_m_complex_rows() {
    let dir = tempfile::tempdir().unwrap();
    let x = DataMatrix::from_real(1024, 3, (0..3072).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    write_matrix(&dir.path().join("x.rfm"), &x).unwrap();
    let o = rfkit(
        &["compress", "--n", "1024", "--m", "64", "--seed", "7", "--in", "x.rfm", "--out", "z.rfm"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let z = ingest_matrix(&dir.path().join("z.rfm")).unwrap();
    assert!(z.is_complex());
    assert_eq!((z.rows(), z.cols()), (64, 3));
    let expected = rfkit::RfOperator::new(1024, 64, 7).unwrap().apply_batch(&x).unwrap();
    assert_eq!(z, expected);
    assert!(dir.path().join("z.rfm.manifest.json").exists());
}

#[test]
fn compress_rejects_wrong_n() {
    let dir = tempfile::tempdir().unwrap();
    let x = DataMatrix::from_real(16, 1, vec![1.0; 16]).unwrap();
    write_matrix(&dir.path().join("x.rfm"), &x).unwrap();
    let o = rfkit(&["compress", "--n", "32", "--m", "4", "--in", "x.rfm", "--out", "z.rfm"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn operator_blob_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = rfkit(&["operator", "gen", "--n", "100", "--m", "10", "--seed", "3", "--out", "op.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = rfkit(&["operator", "inspect", "--in", "op.json"], dir.path());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("n      100"));
    assert!(text.contains("m      10"));
    assert!(text.contains("seed   3"));

    let x = DataMatrix::from_real(100, 2, (0..200).map(f64::from).collect()).unwrap();
    write_matrix(&dir.path().join("x.rfm"), &x).unwrap();
    let o = rfkit(&["compress", "--operator", "op.json", "--in", "x.rfm", "--out", "z.rfm"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let z = ingest_matrix(&dir.path().join("z.rfm")).unwrap();
    assert_eq!(z, rfkit::RfOperator::new(100, 10, 3).unwrap().apply_batch(&x).unwrap());
}

#[test]
fn isometry_rows_per_method_ratio_seed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SINE_CONFIG).unwrap();
    let o = rfkit(&["isometry", "--config", "cfg.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(csv_body(&dir.path().join("out/iso.csv")).len(), 2 * 3 * 3);
    assert!(dir.path().join("out/iso_manifest.json").exists());
    assert!(dir.path().join("out/iso_summary.csv").exists());
}

#[test]
fn overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SINE_CONFIG).unwrap();
    let o = rfkit(
        &["isometry", "--config", "cfg.json", "--ratio", "5", "--seed", "40", "--out", "elsewhere"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_body(&dir.path().join("elsewhere/iso.csv"));
    assert_eq!(rows.len(), 2 * 3);
    assert!(rows.iter().all(|r| r.contains(",5,") || r.contains(",5.0,")));
    assert!(rows.iter().any(|r| r.contains(",42,")));
}

#[test]
fn subcommand_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SINE_CONFIG).unwrap();
    let o = rfkit(&["calcium", "--config", "cfg.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("isometry"));
}

#[test]
fn rerun_from_manifest_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), SINE_CONFIG).unwrap();
    assert!(rfkit(&["isometry", "--config", "cfg.json"], dir.path()).status.success());
    let o = rfkit(&["isometry", "--config", "out/iso_manifest.json", "--out", "again"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        csv_body(&dir.path().join("out/iso.csv")),
        csv_body(&dir.path().join("again/iso.csv"))
    );
}
