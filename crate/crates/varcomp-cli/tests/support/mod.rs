//! Shared fixtures for the command-line tests: small models written as CSV
//! files with a JSON manifest, and helpers that run the compiled binary and
//! decode its output.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

/// Runs the binary with `args`, using `dir` as the working directory so
/// relative paths in the invocation stay stable across reruns.
pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varcomp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("the binary launches")
}

pub fn code(output: &Output) -> i32 {
    output.status.code().expect("the binary exits normally")
}

pub fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_slice(&output.stdout).expect("stdout is one JSON report")
}

pub fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).expect("fixture write succeeds");
    path
}

/// Intercept plus a single unit-vector random-effect column on three
/// observations. `y.csv` lies outside the critical span (both estimates
/// exist); `member.csv` lies inside it.
pub fn e1_fixture() -> TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    write_file(dir.path(), "x.csv", "1\n1\n1\n");
    write_file(dir.path(), "z1.csv", "1\n0\n0\n");
    write_file(dir.path(), "y.csv", "0\n1\n-1\n");
    write_file(dir.path(), "member.csv", "1\n1\n1\n");
    write_file(
        dir.path(),
        "model.json",
        r#"{"x": "x.csv", "z": ["z1.csv"], "y": "y.csv", "seed": 11}"#,
    );
    dir
}

/// Balanced one-way layout: three groups of two observations with an
/// intercept. `y.csv` is an interior case for both criteria; the manifest
/// carries simulation parameters and a seed.
pub fn e2_fixture() -> TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    write_file(dir.path(), "x.csv", "1\n1\n1\n1\n1\n1\n");
    write_file(
        dir.path(),
        "z1.csv",
        "1,0,0\n1,0,0\n0,1,0\n0,1,0\n0,0,1\n0,0,1\n",
    );
    write_file(dir.path(), "y.csv", "2\n3\n4\n5\n9\n7\n");
    write_file(dir.path(), "member.csv", "3\n3\n4\n4\n8\n8\n");
    write_file(
        dir.path(),
        "model.json",
        concat!(
            r#"{"x": "x.csv", "z": ["z1.csv"], "y": "y.csv", "seed": 7, "#,
            r#""sim": {"beta": [3.0], "sigma2": [1.0, 2.0]}}"#
        ),
    );
    dir
}
