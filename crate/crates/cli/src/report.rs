//! Serializable report types. Matrices are row-major nested arrays and
//! infinite thresholds are the string `"inf"`.

use dncs_core::thresholds::Threshold;
use nalgebra::{Complex, DMatrix};
use serde::Serialize;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn all_rows(ms: &[DMatrix<f64>]) -> Vec<Rows> {
    ms.iter().map(rows).collect()
}

/// `[re, im]` pairs.
pub fn modes(zs: &[Complex<f64>]) -> Vec<[f64; 2]> {
    zs.iter().map(|z| [z.re, z.im]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Bound {
    Finite(f64),
    Text(&'static str),
}

impl From<Threshold<f64>> for Bound {
    fn from(t: Threshold<f64>) -> Self {
        match t {
            Threshold::Finite(v) => Bound::Finite(v),
            Threshold::Infinite => Bound::Text("inf"),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SubsystemThreshold {
    pub subsystem: usize,
    pub p: f64,
    pub p_c: Bound,
    pub p_s: Bound,
    pub p_d: Bound,
    pub effective: f64,
    pub local_detectable: bool,
    pub uncontrollable_modes: Vec<[f64; 2]>,
    pub undetectable_modes: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub command: &'static str,
    pub scenario: String,
    pub feasible: bool,
    pub binding: Vec<usize>,
    pub detectable: bool,
    pub stabilizable: bool,
    pub subsystems: Vec<SubsystemThreshold>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
pub struct SolveReport {
    pub command: &'static str,
    pub scenario: String,
    pub outcome: &'static str,
    pub converged: bool,
    pub iterations: usize,
    pub last_change: f64,
    pub fixed_point_residual: f64,
    /// `tr Λ*`.
    pub avg_cost: f64,
    pub feasible: bool,
    pub P0: Rows,
    pub Pn: Vec<Rows>,
    pub K0: Rows,
    pub Kn: Vec<Rows>,
    pub Lambda_blocks: Vec<Rows>,
    /// Present when all subsystems share a state dimension.
    pub Lambda: Option<Rows>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Aborted {
    pub run: usize,
    pub step: usize,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub scenario: String,
    pub solution: &'static str,
    pub predicted: f64,
    pub mean_avg_cost: f64,
    pub stderr: f64,
    /// `(mean_avg_cost - predicted) / stderr`.
    pub z_score: f64,
    pub runs: usize,
    pub runs_completed: usize,
    pub aborted: Vec<Aborted>,
    pub horizon: usize,
    pub seed: u64,
    pub noise: &'static str,
    pub rng: &'static str,
    pub max_mean_sq_state: f64,
    pub max_mean_sq_error: f64,
    pub trace_rows: usize,
    pub run_costs: Vec<f64>,
    pub mean_sq_state: Vec<f64>,
    pub mean_sq_error: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    /// Measured residual or radius.
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub scenario: String,
    pub solution: &'static str,
    pub all_passed: bool,
    pub checks: Vec<Check>,
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
pub struct FiniteReport {
    pub command: &'static str,
    pub scenario: String,
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub noise: &'static str,
    pub dp_cost: f64,
    pub mc_cost: f64,
    pub stderr: f64,
    pub z_score: f64,
    pub P0_0: Rows,
    pub Pn_0: Vec<Rows>,
}
