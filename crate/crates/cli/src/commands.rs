//! The five commands. Each returns the JSON report, a short human summary
//! and the exit code; nothing here prints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dncs_core::mjls::{
    build_auxiliary_2c, build_auxiliary_nc, closed_loops, dcare_solve, find_injections,
    injected_loops, lifted_matrix, mjls_finite_recursions, triangular_shortcut,
};
use dncs_core::operators::l_zero;
use dncs_core::riccati::{
    bar_representation, finite_horizon_solve, steady_residual, steady_solve, two_controller_solve,
};
use dncs_core::simulator::{finite_cost_check_with, run_monte_carlo, verify_step_identity};
use dncs_core::testing::{random_pd, uniform_matrix};
use dncs_core::thresholds::{
    assumption_warnings, critical_probs, feasibility_verdict, verdict_from,
};
use dncs_core::{blockmat, DncsSpecF64, Error, MjlsModelF64, SteadySolutionF64};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::report::*;
use crate::scenario::Scenario;
use crate::{exit, trace, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Solve,
    Simulate,
    Verify,
    Finite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: u8,
    /// Pretty-printed JSON with a trailing newline.
    pub report: String,
    pub summary: String,
}

/// Horizon of the finite-horizon checks run by `verify`.
pub const VERIFY_HORIZON: usize = 10;
/// Random `(x̂, Σ)` points for the step identity, besides the origin.
pub const VERIFY_POINTS: usize = 100;
pub const REPRESENTATION_TOL: f64 = 1e-9;
pub const RECURSION_TOL: f64 = 1e-10;
pub const STEADY_TOL: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-8;
pub const SHORTCUT_TOL: f64 = 1e-8;
const INJECTION_RESTARTS: usize = 20;

fn json<T: Serialize>(r: &T) -> String {
    let mut s = serde_json::to_string_pretty(r).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Refusal {
    command: &'static str,
    scenario: String,
    outcome: &'static str,
    reason: String,
}

fn refuse(command: &'static str, sc: &Scenario, outcome: &'static str, reason: String) -> Outcome {
    Outcome {
        code: exit::INFEASIBLE,
        summary: format!("{command}: {reason}"),
        report: json(&Refusal {
            command,
            scenario: sc.name.clone(),
            outcome,
            reason,
        }),
    }
}

pub fn run(cmd: Command, sc: &Scenario, trace: Option<&Path>) -> Result<Outcome, CliError> {
    match cmd {
        Command::Analyze => cmd_analyze(sc),
        Command::Solve => cmd_solve(sc),
        Command::Simulate => cmd_simulate(sc, trace),
        Command::Verify => cmd_verify(sc),
        Command::Finite => cmd_finite(sc),
    }
}

pub fn cmd_analyze(sc: &Scenario) -> Result<Outcome, CliError> {
    let spec = &sc.spec;
    let rep = critical_probs(spec, sc.solver.rank_tol)?;
    let verdict = verdict_from(spec, &rep);
    let subsystems: Vec<SubsystemThreshold> = (0..spec.n_subsystems())
        .map(|n| SubsystemThreshold {
            subsystem: n,
            p: spec.prob(n),
            p_c: rep.p_c[n].into(),
            p_s: rep.p_s[n].into(),
            p_d: rep.p_d[n].into(),
            effective: rep.effective[n],
            local_detectable: rep.local_detectable[n],
            uncontrollable_modes: modes(&rep.uncontrollable_modes[n]),
            undetectable_modes: modes(&rep.undetectable_modes[n]),
        })
        .collect();
    let mut summary: Vec<String> = (0..spec.n_subsystems())
        .map(|n| format!("subsystem {n}: p = {}, p_c = {}", spec.prob(n), rep.p_c[n]))
        .collect();
    summary.push(if verdict.feasible {
        "feasible".to_string()
    } else {
        format!("infeasible, binding subsystems {:?}", verdict.binding)
    });
    let report = AnalyzeReport {
        command: "analyze",
        scenario: sc.name.clone(),
        feasible: verdict.feasible,
        binding: verdict.binding.clone(),
        detectable: rep.detectable,
        stabilizable: rep.stabilizable,
        subsystems,
        warnings: assumption_warnings(spec, sc.solver.rank_tol)?,
    };
    Ok(Outcome {
        code: if verdict.feasible {
            exit::OK
        } else {
            exit::INFEASIBLE
        },
        report: json(&report),
        summary: summary.join("\n"),
    })
}

fn solve_report(sc: &Scenario, sol: &SteadySolutionF64) -> Result<SolveReport, CliError> {
    let feasible = feasibility_verdict(&sc.spec, sc.solver.rank_tol)?.feasible;
    Ok(SolveReport {
        command: "solve",
        scenario: sc.name.clone(),
        outcome: sol.outcome.as_str(),
        converged: sol.converged,
        iterations: sol.iterations,
        last_change: sol.last_change,
        fixed_point_residual: steady_residual(&sc.spec, sol).unwrap_or(f64::NAN),
        avg_cost: sol.avg_cost,
        feasible,
        P0: rows(sol.p0_star.data()),
        Pn: all_rows(&sol.pn_star),
        K0: rows(sol.k0_star.data()),
        Kn: all_rows(&sol.kn_star),
        Lambda_blocks: all_rows(&sol.lambda_blocks),
        Lambda: sol.lambda_star().as_ref().map(rows),
        warnings: sol.warnings.clone(),
    })
}

pub fn cmd_solve(sc: &Scenario) -> Result<Outcome, CliError> {
    let sol = steady_solve(&sc.spec, &sc.solver.steady())?;
    let report = solve_report(sc, &sol)?;
    let summary = if sol.converged {
        format!(
            "converged after {} iterations, average cost {}",
            sol.iterations, sol.avg_cost
        )
    } else {
        format!(
            "{} after {} iterations",
            sol.outcome.as_str(),
            sol.iterations
        )
    };
    Ok(Outcome {
        code: if sol.converged {
            exit::OK
        } else {
            exit::INFEASIBLE
        },
        report: json(&report),
        summary,
    })
}

/// The supplied solution if there is one, otherwise a fresh solve.
fn solution_for(sc: &Scenario) -> Result<(SteadySolutionF64, &'static str), CliError> {
    Ok(match &sc.solution {
        Some(s) => (s.clone(), "supplied"),
        None => (steady_solve(&sc.spec, &sc.solver.steady())?, "solved"),
    })
}

pub fn cmd_simulate(sc: &Scenario, trace_path: Option<&Path>) -> Result<Outcome, CliError> {
    if sc.sim.horizon == 0 {
        return Err(CliError::Validation {
            field: "sim.horizon".into(),
            reason: "simulate needs at least one step".into(),
        });
    }
    let verdict = feasibility_verdict(&sc.spec, sc.solver.rank_tol)?;
    if !verdict.feasible {
        return Ok(refuse(
            "simulate",
            sc,
            "infeasible",
            format!(
                "drop probabilities at or above threshold for subsystems {:?}",
                verdict.binding
            ),
        ));
    }
    let (sol, source) = solution_for(sc)?;
    if !sol.converged {
        return Ok(refuse(
            "simulate",
            sc,
            sol.outcome.as_str(),
            format!("steady-state solve {}", sol.outcome.as_str()),
        ));
    }
    let cfg = sc.sim.config();
    let rep = run_monte_carlo(&sc.spec, &sol, &cfg)?;
    let mut notes = Vec::new();
    let path = trace_path.or(sc.output.trace.as_deref());
    match (path, cfg.record_every) {
        (Some(p), 0) => notes.push(format!(
            "record_every is 0, no trace written to {}",
            p.display()
        )),
        (Some(p), _) => {
            write_trace(p, &sc.spec, &rep.traces)?;
            notes.push(format!(
                "{} trace rows written to {}",
                rep.traces.len(),
                p.display()
            ));
        }
        _ => {}
    }
    let z = (rep.mean_avg_cost - rep.predicted) / rep.stderr;
    let report = SimulateReport {
        command: "simulate",
        scenario: sc.name.clone(),
        solution: source,
        predicted: rep.predicted,
        mean_avg_cost: rep.mean_avg_cost,
        stderr: rep.stderr,
        z_score: z,
        runs: cfg.runs,
        runs_completed: rep.runs_completed,
        aborted: rep
            .aborted
            .iter()
            .map(|a| Aborted {
                run: a.run,
                step: a.step,
            })
            .collect(),
        horizon: rep.horizon,
        seed: rep.seed,
        noise: rep.noise.as_str(),
        rng: rep.rng,
        max_mean_sq_state: rep.max_mean_sq_state,
        max_mean_sq_error: rep.max_mean_sq_error,
        trace_rows: rep.traces.len(),
        run_costs: rep.run_costs.clone(),
        mean_sq_state: rep.mean_sq_state.clone(),
        mean_sq_error: rep.mean_sq_error.clone(),
    };
    notes.insert(
        0,
        format!(
            "mean average cost {} +/- {} (predicted {}, z = {z:.3}), {}/{} runs completed",
            rep.mean_avg_cost, rep.stderr, rep.predicted, rep.runs_completed, cfg.runs
        ),
    );
    Ok(Outcome {
        code: exit::OK,
        report: json(&report),
        summary: notes.join("\n"),
    })
}

fn write_trace(
    path: &Path,
    spec: &DncsSpecF64,
    rows: &[dncs_core::simulator::TraceRow<f64>],
) -> Result<(), CliError> {
    let write_err = |e: std::io::Error| CliError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(write_err)?);
    trace::write_csv(
        &mut out,
        rows,
        spec.state_dim(),
        spec.n_subsystems(),
        spec.input_dim(),
    )
    .map_err(write_err)?;
    out.flush().map_err(write_err)
}

fn rel_dev(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn check(name: &'static str, value: f64, tolerance: f64, detail: impl Into<String>) -> Check {
    Check {
        name,
        status: if value < tolerance {
            Status::Pass
        } else {
            Status::Fail
        },
        value: Some(value),
        tolerance: Some(tolerance),
        detail: detail.into(),
    }
}

fn skipped(name: &'static str, detail: impl Into<String>) -> Check {
    Check {
        name,
        status: Status::Skipped,
        value: None,
        tolerance: None,
        detail: detail.into(),
    }
}

fn representation_check(spec: &DncsSpecF64) -> Result<(Check, Vec<Vec<DMatrix<f64>>>), CliError> {
    let fin = finite_horizon_solve(spec, VERIFY_HORIZON)?;
    let bar = bar_representation(spec, VERIFY_HORIZON)?;
    let mut dev: f64 = 0.0;
    for (t, modes) in bar.iter().enumerate() {
        dev = dev.max(rel_dev(&modes[0], fin.p0_seq[t].data()));
        for (n, pn) in fin.pn_seq[t].iter().enumerate() {
            let want = l_zero(&fin.p0_seq[t], pn, n, n)?.into_inner();
            dev = dev.max(rel_dev(&modes[n + 1], &want));
        }
    }
    let c = check(
        "representation",
        dev,
        REPRESENTATION_TOL,
        format!(
            "equal-dimension recursion against embedded coupled recursion, t <= {}",
            VERIFY_HORIZON + 1
        ),
    );
    Ok((c, bar))
}

fn max_recursion_dev(a: &[Vec<DMatrix<f64>>], b: &[Vec<DMatrix<f64>>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| rel_dev(p, q)))
        .fold(0.0, f64::max)
}

/// Lifted radius from the triangular shortcut, and from the full Kronecker
/// assembly unless that would be too large.
fn lifted_rho(
    model: &MjlsModelF64,
    closed: &[DMatrix<f64>],
) -> Result<(f64, Option<f64>), CliError> {
    let short = triangular_shortcut(model, closed)?.rho();
    match lifted_matrix(model.theta(), closed) {
        Ok(m) => Ok((
            short,
            Some(blockmat::spectral_radius(&m, blockmat::DEFAULT_EIG_TOL)?),
        )),
        Err(Error::TooLarge { .. }) => Ok((short, None)),
        Err(e) => Err(e.into()),
    }
}

fn stability_checks(
    sc: &Scenario,
    model: &MjlsModelF64,
    checks: &mut Vec<Check>,
) -> Result<(), CliError> {
    let dcare = dcare_solve(model, &sc.solver.steady())?;
    if !dcare.converged {
        checks.push(check(
            "ss_test",
            f64::INFINITY,
            1.0,
            format!("jump-system coupled equations {}", dcare.outcome.as_str()),
        ));
        checks.push(skipped("shortcut_vs_kronecker", "no stabilizing gains"));
    } else {
        let closed = closed_loops(model, &dcare.k)?;
        let (short, full) = lifted_rho(model, &closed)?;
        let rho = full.unwrap_or(short);
        checks.push(check(
            "ss_test",
            rho,
            1.0,
            "spectral radius of the lifted closed loop",
        ));
        checks.push(match full {
            Some(f) => check(
                "shortcut_vs_kronecker",
                (f - short).abs(),
                SHORTCUT_TOL,
                format!("triangular {short}, Kronecker {f}"),
            ),
            None => skipped(
                "shortcut_vs_kronecker",
                "lifted matrix too large to assemble",
            ),
        });
    }
    let h = find_injections(model, sc.sim.seed, INJECTION_RESTARTS)?;
    let (short, full) = lifted_rho(model, &injected_loops(model, &h)?)?;
    checks.push(check(
        "sd_test",
        full.unwrap_or(short),
        1.0,
        "spectral radius of the lifted loop under searched output injections",
    ));
    Ok(())
}

fn identity_check(sc: &Scenario, sol: &SteadySolutionF64) -> Result<Check, CliError> {
    let spec = &sc.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.sim.seed);
    let dims = spec.state_partition().dims().to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..=VERIFY_POINTS {
        let (x_hat, sigma) = if k == 0 {
            (
                DVector::zeros(spec.state_dim()),
                dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            )
        } else {
            let x = uniform_matrix(&mut rng, spec.state_dim(), 1, 3.0);
            let s: Vec<DMatrix<f64>> = dims.iter().map(|&d| random_pd(&mut rng, d, 0.0)).collect();
            (DVector::from_column_slice(x.as_slice()), s)
        };
        let chk = verify_step_identity(spec, sol, &x_hat, &sigma, IDENTITY_TOL)?;
        worst = worst.max(chk.residual / (1.0 + chk.rhs.abs()));
    }
    Ok(check(
        "step_identity",
        worst,
        IDENTITY_TOL,
        format!("largest relative residual over the origin and {VERIFY_POINTS} random points"),
    ))
}

fn two_controller_checks(sc: &Scenario, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let spec = &sc.spec;
    if spec.n_subsystems() != 1 {
        checks.push(skipped(
            "two_controller_recursions",
            "needs a single subsystem",
        ));
        checks.push(skipped("two_controller_steady", "needs a single subsystem"));
        return Ok(());
    }
    let (a, b10, b11) = (spec.a_nn(0), spec.b_n0(0), spec.b_nn(0));
    let (q, r, p) = (spec.q().data(), spec.r().data(), spec.prob(0));
    let two = mjls_finite_recursions(&build_auxiliary_2c(a, b10, b11, q, r, p)?, VERIFY_HORIZON)?;
    let many = mjls_finite_recursions(&build_auxiliary_nc(spec)?, VERIFY_HORIZON)?;
    checks.push(check(
        "two_controller_recursions",
        max_recursion_dev(&two.p, &many.p),
        RECURSION_TOL,
        "single-plant and N-controller jump systems",
    ));
    let opts = sc.solver.steady();
    let s2 = two_controller_solve(a, b10, b11, q, r, p, &opts)?;
    let sn = steady_solve(spec, &opts)?;
    checks.push(if s2.converged != sn.converged {
        check(
            "two_controller_steady",
            f64::INFINITY,
            STEADY_TOL,
            "solvers disagree on convergence",
        )
    } else if !sn.converged {
        skipped(
            "two_controller_steady",
            format!("both solvers {}", sn.outcome.as_str()),
        )
    } else {
        let dev = rel_dev(s2.p0_star.data(), sn.p0_star.data())
            .max(rel_dev(&s2.pn_star[0], &sn.pn_star[0]));
        check(
            "two_controller_steady",
            dev,
            STEADY_TOL,
            "single-plant and general steady-state solvers",
        )
    });
    Ok(())
}

pub fn cmd_verify(sc: &Scenario) -> Result<Outcome, CliError> {
    let spec = &sc.spec;
    let mut checks = Vec::new();
    let (rep_check, bar) = representation_check(spec)?;
    checks.push(rep_check);
    let model = build_auxiliary_nc(spec)?;
    let rec = mjls_finite_recursions(&model, VERIFY_HORIZON)?;
    checks.push(check(
        "mjls_equivalence",
        max_recursion_dev(&rec.p, &bar),
        RECURSION_TOL,
        "jump-system recursion against equal-dimension recursion",
    ));
    two_controller_checks(sc, &mut checks)?;

    let (sol, source) = solution_for(sc)?;
    let steady_ok = sol.converged;
    if steady_ok {
        checks.push(check(
            "fixed_point_residual",
            steady_residual(spec, &sol)?,
            STEADY_TOL,
            "relative change of one coupled step from the solution",
        ));
        checks.push(identity_check(sc, &sol)?);
        stability_checks(sc, &model, &mut checks)?;
    } else {
        let why = format!("steady-state solve {}", sol.outcome.as_str());
        for name in [
            "fixed_point_residual",
            "step_identity",
            "ss_test",
            "shortcut_vs_kronecker",
            "sd_test",
        ] {
            checks.push(skipped(name, why.clone()));
        }
    }

    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.status == Status::Fail)
        .map(|c| c.name)
        .collect();
    let code = if !failed.is_empty() {
        exit::NUMERIC
    } else if !steady_ok {
        exit::INFEASIBLE
    } else {
        exit::OK
    };
    let summary = checks
        .iter()
        .map(|c| match c.value {
            Some(v) => format!("{:<26} {:?} {v:e}", c.name, c.status),
            None => format!("{:<26} {:?} ({})", c.name, c.status, c.detail),
        })
        .collect::<Vec<_>>()
        .join("\n");
    let report = VerifyReport {
        command: "verify",
        scenario: sc.name.clone(),
        solution: source,
        all_passed: failed.is_empty() && steady_ok,
        checks,
    };
    Ok(Outcome {
        code,
        report: json(&report),
        summary,
    })
}

pub fn cmd_finite(sc: &Scenario) -> Result<Outcome, CliError> {
    let cfg = sc.sim.config();
    let fin = finite_horizon_solve(&sc.spec, cfg.horizon)?;
    let chk = finite_cost_check_with(&sc.spec, &fin, cfg.runs, cfg.seed, cfg.noise)?;
    let report = FiniteReport {
        command: "finite",
        scenario: sc.name.clone(),
        horizon: cfg.horizon,
        runs: cfg.runs,
        seed: cfg.seed,
        noise: cfg.noise.as_str(),
        dp_cost: chk.dp_cost,
        mc_cost: chk.mc_cost,
        stderr: chk.stderr,
        z_score: chk.z_score,
        P0_0: rows(fin.p0_seq[0].data()),
        Pn_0: all_rows(&fin.pn_seq[0]),
    };
    Ok(Outcome {
        code: exit::OK,
        report: json(&report),
        summary: format!(
            "J*_{} = {}, Monte Carlo {} +/- {} (z = {:.3})",
            cfg.horizon, chk.dp_cost, chk.mc_cost, chk.stderr, chk.z_score
        ),
    })
}
