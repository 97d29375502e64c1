//! Scenario files: one JSON document describing the plant, solver and
//! simulation settings.
//!
//! ```json
//! {
//!   "name": "sensor",
//!   "spec": {
//!     "n": 1, "state_dims": [1], "input_dims": [1, 1],
//!     "A": [[[2.0]]], "B_local": [[[0.0]]], "B_remote": [[[1.0]]],
//!     "Q": [[1.0]], "R": [[1.0, 0.0], [0.0, 1.0]], "p": [0.1]
//!   },
//!   "solver": { "tol": 1e-10 },
//!   "sim": { "horizon": 5000, "runs": 200, "seed": 7 }
//! }
//! ```
//!
//! Matrices are row-major nested arrays. `A`, `B_local` and `B_remote` list
//! one block per subsystem; `input_dims[0]` is the remote input.

use std::path::{Path, PathBuf};

use dncs_core::riccati::{solution_from_matrices, SteadyOptions};
use dncs_core::simulator::{NoiseKind, SimConfig};
use dncs_core::{DncsSpecF64, Error, SteadySolutionF64};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::CliError;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    spec: RawSpec,
    #[serde(default)]
    solver: SolverOptions,
    #[serde(default)]
    sim: SimOptions,
    #[serde(default)]
    output: OutputPaths,
    #[serde(default)]
    solution: Option<RawSolution>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawSpec {
    n: usize,
    state_dims: Vec<usize>,
    input_dims: Vec<usize>,
    A: Vec<Rows>,
    B_local: Vec<Rows>,
    B_remote: Vec<Rows>,
    Q: Rows,
    R: Rows,
    p: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct RawSolution {
    P0: Rows,
    Pn: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_cap: f64,
    pub rank_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        let d = SteadyOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            divergence_cap: d.divergence_cap,
            rank_tol: dncs_core::thresholds::DEFAULT_RANK_TOL,
        }
    }
}

impl SolverOptions {
    pub fn steady(&self) -> SteadyOptions {
        SteadyOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            divergence_cap: self.divergence_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Noise {
    #[default]
    Gaussian,
    Rademacher,
}

impl From<Noise> for NoiseKind {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Gaussian => NoiseKind::Gaussian,
            Noise::Rademacher => NoiseKind::Rademacher,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub noise: Noise,
    pub record_every: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            horizon: d.horizon,
            runs: d.runs,
            seed: d.seed,
            noise: Noise::Gaussian,
            record_every: d.record_every,
        }
    }
}

impl SimOptions {
    pub fn config(&self) -> SimConfig {
        SimConfig {
            horizon: self.horizon,
            runs: self.runs,
            seed: self.seed,
            noise: self.noise.into(),
            record_every: self.record_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Default trace CSV path for `simulate`, relative to the working
    /// directory.
    pub trace: Option<PathBuf>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub spec: DncsSpecF64,
    pub solver: SolverOptions,
    pub sim: SimOptions,
    pub output: OutputPaths,
    /// Matrices supplied in the file, used instead of solving.
    pub solution: Option<SteadySolutionF64>,
}

/// Command-line values that replace scenario settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub runs: Option<usize>,
    pub horizon: Option<usize>,
}

impl Scenario {
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(v) = o.seed {
            self.sim.seed = v;
        }
        if let Some(v) = o.tol {
            self.solver.tol = v;
        }
        if let Some(v) = o.max_iter {
            self.solver.max_iter = v;
        }
        if let Some(v) = o.runs {
            self.sim.runs = v;
        }
        if let Some(v) = o.horizon {
            self.sim.horizon = v;
        }
        check_options(&self.solver, &self.sim)
    }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

fn matrix(rows: &Rows, field: &str) -> Result<DMatrix<f64>, CliError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(invalid(
            field,
            format!("row {i} has {} entries, expected {ncols}", r.len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn check_len(field: &str, got: usize, want: usize) -> Result<(), CliError> {
    if got != want {
        return Err(invalid(
            field,
            format!("expected {want} entries, got {got}"),
        ));
    }
    Ok(())
}

fn shape_error(field: String, n: usize, want: (usize, usize), got: &DMatrix<f64>) -> CliError {
    invalid(
        field,
        format!(
            "subsystem {n}: expected {}x{}, got {}x{}",
            want.0,
            want.1,
            got.nrows(),
            got.ncols()
        ),
    )
}

fn build_spec(raw: &RawSpec) -> Result<DncsSpecF64, CliError> {
    let n = raw.n;
    if n == 0 {
        return Err(invalid("spec.n", "at least one subsystem is required"));
    }
    check_len("spec.state_dims", raw.state_dims.len(), n)?;
    check_len("spec.input_dims", raw.input_dims.len(), n + 1)?;
    check_len("spec.A", raw.A.len(), n)?;
    check_len("spec.B_local", raw.B_local.len(), n)?;
    check_len("spec.B_remote", raw.B_remote.len(), n)?;
    check_len("spec.p", raw.p.len(), n)?;

    let remote = raw.input_dims[0];
    let (mut a, mut bl, mut br) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let d = raw.state_dims[i];
        let m = raw.input_dims[i + 1];
        let ai = matrix(&raw.A[i], &format!("spec.A[{i}]"))?;
        if ai.shape() != (d, d) {
            return Err(shape_error(format!("spec.A[{i}]"), i, (d, d), &ai));
        }
        let bli = matrix(&raw.B_local[i], &format!("spec.B_local[{i}]"))?;
        if bli.shape() != (d, m) {
            return Err(shape_error(format!("spec.B_local[{i}]"), i, (d, m), &bli));
        }
        let bri = matrix(&raw.B_remote[i], &format!("spec.B_remote[{i}]"))?;
        if bri.shape() != (d, remote) {
            return Err(shape_error(
                format!("spec.B_remote[{i}]"),
                i,
                (d, remote),
                &bri,
            ));
        }
        a.push(ai);
        bl.push(bli);
        br.push(bri);
    }
    let q = matrix(&raw.Q, "spec.Q")?;
    let r = matrix(&raw.R, "spec.R")?;
    DncsSpecF64::new(a, bl, br, q, r, raw.p.clone()).map_err(|e| match e {
        Error::Invalid { field, reason } => invalid(format!("spec.{field}"), reason),
        other => invalid("spec", other.to_string()),
    })
}

fn check_options(solver: &SolverOptions, sim: &SimOptions) -> Result<(), CliError> {
    let positive = |field: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(
                field,
                format!("must be a positive number, got {v}"),
            ))
        }
    };
    positive("solver.tol", solver.tol)?;
    positive("solver.divergence_cap", solver.divergence_cap)?;
    positive("solver.rank_tol", solver.rank_tol)?;
    if solver.max_iter == 0 {
        return Err(invalid("solver.max_iter", "must be at least 1"));
    }
    if sim.runs == 0 {
        return Err(invalid("sim.runs", "must be at least 1"));
    }
    Ok(())
}

fn build_solution(spec: &DncsSpecF64, raw: &RawSolution) -> Result<SteadySolutionF64, CliError> {
    let p0 = matrix(&raw.P0, "solution.P0")?;
    let pn = raw
        .Pn
        .iter()
        .enumerate()
        .map(|(i, m)| matrix(m, &format!("solution.Pn[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    solution_from_matrices(spec, p0, pn).map_err(|e| match e {
        Error::Invalid { field, reason } => invalid(format!("solution.{field}"), reason),
        other => CliError::Numeric(other),
    })
}

/// Parses and validates a scenario document. `origin` labels parse errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, CliError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let spec = build_spec(&raw.spec)?;
    check_options(&raw.solver, &raw.sim)?;
    let solution = raw
        .solution
        .as_ref()
        .map(|s| build_solution(&spec, s))
        .transpose()?;
    Ok(Scenario {
        name: raw.name,
        spec,
        solver: raw.solver,
        sim: raw.sim,
        output: raw.output,
        solution,
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SENSOR: &str = r#"{
        "name": "sensor",
        "spec": {
            "n": 1, "state_dims": [1], "input_dims": [1, 1],
            "A": [[[2.0]]], "B_local": [[[0.0]]], "B_remote": [[[1.0]]],
            "Q": [[1.0]], "R": [[1.0, 0.0], [0.0, 1.0]], "p": [0.1]
        }
    }"#;

    #[test]
    fn minimal_scenario_loads_with_defaults() {
        let sc = parse_scenario(SENSOR, "sensor.json").unwrap();
        assert_eq!(sc.spec.n_subsystems(), 1);
        assert_eq!(sc.solver, SolverOptions::default());
        assert_eq!(sc.sim.runs, 200);
        assert_eq!(sc.sim.horizon, 5000);
        assert!(sc.solution.is_none());
    }

    #[test]
    fn non_pd_r_names_r() {
        let text = SENSOR.replace(
            r#""R": [[1.0, 0.0], [0.0, 1.0]]"#,
            r#""R": [[1.0, 0.0], [0.0, 0.0]]"#,
        );
        match parse_scenario(&text, "x") {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "spec.R"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_local_rows_name_the_subsystem() {
        let text = SENSOR.replace(r#""B_local": [[[0.0]]]"#, r#""B_local": [[[0.0], [1.0]]]"#);
        match parse_scenario(&text, "x") {
            Err(CliError::Validation { field, reason }) => {
                assert_eq!(field, "spec.B_local[0]");
                assert!(reason.contains("subsystem 0"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_a_location() {
        let text = SENSOR.replace("\"p\": [0.1]", "\"p\": [0.1,]");
        match parse_scenario(&text, "bad.json") {
            Err(CliError::Parse {
                path, line, column, ..
            }) => {
                assert_eq!(path, "bad.json");
                assert_eq!(line, 6);
                assert!(column > 0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infinity_is_not_an_input() {
        let text = SENSOR.replace("\"p\": [0.1]", "\"p\": [\"inf\"]");
        assert!(matches!(
            parse_scenario(&text, "x"),
            Err(CliError::Parse { .. })
        ));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = SENSOR.replace(
            r#""R": [[1.0, 0.0], [0.0, 1.0]]"#,
            r#""R": [[1.0, 0.0], [1.0]]"#,
        );
        match parse_scenario(&text, "x") {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "spec.R"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_are_validated() {
        let mut sc = parse_scenario(SENSOR, "x").unwrap();
        sc.apply(&Overrides {
            seed: Some(9),
            runs: Some(3),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((sc.sim.seed, sc.sim.runs), (9, 3));
        let err = sc.apply(&Overrides {
            tol: Some(-1.0),
            ..Overrides::default()
        });
        assert!(
            matches!(err, Err(CliError::Validation { ref field, .. }) if field == "solver.tol")
        );
    }

    #[test]
    fn supplied_solution_is_checked() {
        let text = SENSOR.replace(
            "\"name\": \"sensor\",",
            r#""name": "sensor", "solution": {"P0": [[4.0]], "Pn": [[[1.0, 2.0]]]},"#,
        );
        match parse_scenario(&text, "x") {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "solution.Pn[0]"),
            other => panic!("{other:?}"),
        }
    }
}
