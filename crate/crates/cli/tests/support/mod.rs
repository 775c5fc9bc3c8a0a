#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hpct_core::pipeline::{normalized_report_json, Report};

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn mock_script() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock_cycle.json")
}

/// Run the binary from the workspace root.
pub fn hpct(args: &[&str]) -> Output {
    hpct_in(&root(), args)
}

pub fn hpct_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpct"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// `hpct pipeline` with `args`; returns the run directory.
pub fn pipeline(out_dir: &Path, run_id: &str, args: &[&str]) -> PathBuf {
    let mut all = vec!["pipeline", "--output-dir", out_dir.to_str().unwrap(), "--run-id", run_id];
    all.extend_from_slice(args);
    let stdout = ok(&hpct(&all));
    PathBuf::from(stdout.trim())
}

pub fn read_report(run_dir: &Path) -> Report {
    serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap()
}

pub fn normalized(run_dir: &Path) -> String {
    normalized_report_json(&read_report(run_dir))
}

/// Schema violations of `run_dir/report.json`, as `path: message` lines.
pub fn report_schema_errors(run_dir: &Path) -> Vec<String> {
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(root().join("schemas/report.schema.json")).unwrap()).unwrap();
    let inst: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    let v = jsonschema::validator_for(&schema).unwrap();
    v.iter_errors(&inst).map(|e| format!("{}: {e}", e.instance_path())).collect()
}
