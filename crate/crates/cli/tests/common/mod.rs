#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dncs_core::DncsSpecF64;
use nalgebra::DMatrix;
use serde_json::{json, Value};

pub fn rows(m: &DMatrix<f64>) -> Value {
    json!(m
        .row_iter()
        .map(|r| r.iter().copied().collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

pub fn sensor(p: f64) -> DncsSpecF64 {
    DncsSpecF64::two_controller(
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::identity(2, 2),
        p,
    )
    .unwrap()
}

/// Scenario document for `spec` with the given `sim` block.
pub fn scenario(name: &str, spec: &DncsSpecF64, sim: Value) -> Value {
    let n = spec.n_subsystems();
    json!({
        "name": name,
        "spec": {
            "n": n,
            "state_dims": spec.state_partition().dims(),
            "input_dims": spec.input_partition().dims(),
            "A": (0..n).map(|i| rows(spec.a_nn(i))).collect::<Vec<_>>(),
            "B_local": (0..n).map(|i| rows(spec.b_nn(i))).collect::<Vec<_>>(),
            "B_remote": (0..n).map(|i| rows(spec.b_n0(i))).collect::<Vec<_>>(),
            "Q": rows(spec.q().data()),
            "R": rows(spec.r().data()),
            "p": spec.probs(),
        },
        "sim": sim,
    })
}

pub fn write(dir: &Path, file: &str, doc: &Value) -> PathBuf {
    let path = dir.join(file);
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path
}

pub fn dncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dncs"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn dncs_on(cmd: &str, scenario: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--scenario", scenario.to_str().unwrap()];
    args.extend_from_slice(extra);
    dncs(&args)
}

pub fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}); stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}
