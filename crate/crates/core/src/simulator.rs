//! Closed-loop simulation under the optimal strategies and the exact
//! one-step cost identity.
//!
//! Each run starts from `x₀ = 0` with `x̂₀ = 0`, draws the link outcomes
//! `Γ_{t+1}` and then the noise `W_t` at every step, and applies
//!
//! ```text
//! U_t = K⁰ x̂_t + diag(0; K¹..Kᴺ)(x_t - x̂_t)
//! ```
//!
//! Runs use ChaCha8 seeded from the configured seed with the run index as
//! the stream id.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::blockmat::trace;
use crate::riccati::{finite_horizon_solve, DncsSpec, FiniteSolution, SteadySolution};
use crate::{Error, Result, Scalar};

/// Generator recorded in reports.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64(seed), stream = run index";

/// `‖x‖∞` beyond which a run is abandoned.
pub const BLOWUP_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Independent ±1 entries, also unit covariance.
    Rademacher,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    pub noise: NoiseKind,
    /// Trace stride; `0` records nothing.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 5000,
            runs: 200,
            seed: 0,
            noise: NoiseKind::Gaussian,
            record_every: 0,
        }
    }
}

/// Gains in force at one step.
#[derive(Debug, Clone, Copy)]
pub struct Strategy<'a, T: Scalar> {
    pub k0: &'a DMatrix<T>,
    pub kn: &'a [DMatrix<T>],
}

impl<'a, T: Scalar> Strategy<'a, T> {
    pub fn steady(sol: &'a SteadySolution<T>) -> Self {
        Self {
            k0: sol.k0_star.data(),
            kn: &sol.kn_star,
        }
    }

    pub fn finite(sol: &'a FiniteSolution<T>, t: usize) -> Self {
        Self {
            k0: sol.k0_seq[t].data(),
            kn: &sol.kn_seq[t],
        }
    }
}

/// Plant state, common estimate and per-subsystem error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T: Scalar> {
    pub x: DVector<T>,
    pub x_hat: DVector<T>,
    /// Covariance of `xⁿ - x̂ⁿ` given the common information.
    pub sigma: Vec<DMatrix<T>>,
    pub t: usize,
    pub accumulated_cost: T,
}

impl<T: Scalar> SimState<T> {
    pub fn initial(spec: &DncsSpec<T>) -> Self {
        let part = spec.state_partition();
        Self {
            x: DVector::zeros(part.total()),
            x_hat: DVector::zeros(part.total()),
            sigma: part.dims().iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            t: 0,
            accumulated_cost: T::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T: Scalar> {
    pub next: SimState<T>,
    pub u: DVector<T>,
    pub cost: T,
}

/// Control action of the optimal strategy.
pub fn action<T: Scalar>(
    spec: &DncsSpec<T>,
    state: &SimState<T>,
    strat: &Strategy<'_, T>,
) -> DVector<T> {
    let mut u = strat.k0 * &state.x_hat;
    let err = &state.x - &state.x_hat;
    let (sp, ip) = (spec.state_partition(), spec.input_partition());
    for (n, k) in strat.kn.iter().enumerate() {
        let e = err.rows(sp.offset(n), sp.size(n));
        let mut block = u.rows_mut(ip.offset(n + 1), ip.size(n + 1));
        block += k * e;
    }
    u
}

/// One closed-loop step: action and cost at `t`, then plant, estimate and
/// covariance at `t + 1`. `gamma[n]` is true when link `n` delivers
/// `x_{t+1}ⁿ`.
pub fn step<T: Scalar>(
    spec: &DncsSpec<T>,
    state: &SimState<T>,
    gamma: &[bool],
    noise: &DVector<T>,
    strat: &Strategy<'_, T>,
) -> Result<StepOutput<T>> {
    let nsub = spec.n_subsystems();
    if gamma.len() != nsub {
        return Err(Error::dim("link outcomes", nsub, gamma.len()));
    }
    if noise.len() != spec.state_dim() {
        return Err(Error::dim("noise", spec.state_dim(), noise.len()));
    }
    let (a, b) = (spec.a().data(), spec.b().data());
    let u = action(spec, state, strat);
    let cost = state.x.dot(&(spec.q().data() * &state.x)) + u.dot(&(spec.r().data() * &u));
    let x = a * &state.x + b * &u + noise;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteState {
            run: 0,
            step: state.t,
        });
    }
    let prior = (a + b * strat.k0) * &state.x_hat;
    let mut x_hat = prior;
    let mut sigma = Vec::with_capacity(nsub);
    let part = spec.state_partition();
    for n in 0..nsub {
        let d = part.size(n);
        if gamma[n] {
            x_hat
                .rows_mut(part.offset(n), d)
                .copy_from(&x.rows(part.offset(n), d));
            sigma.push(DMatrix::zeros(d, d));
        } else {
            let cl = spec.a_nn(n) + spec.b_nn(n) * &strat.kn[n];
            sigma.push(DMatrix::identity(d, d) + &cl * &state.sigma[n] * cl.transpose());
        }
    }
    Ok(StepOutput {
        next: SimState {
            x,
            x_hat,
            sigma,
            t: state.t + 1,
            accumulated_cost: state.accumulated_cost + cost,
        },
        u,
        cost,
    })
}

/// One recorded step of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow<T: Scalar> {
    pub t: usize,
    pub run: usize,
    pub x: DVector<T>,
    pub x_hat: DVector<T>,
    /// Outcome of the link that produced `x̂_t`. The known initial state
    /// counts as delivered.
    pub gamma: Vec<bool>,
    pub u: DVector<T>,
    pub cost: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbortedRun {
    pub run: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport<T: Scalar> {
    /// Mean over completed runs of the time-averaged cost.
    pub mean_avg_cost: T,
    /// Standard error of that mean across runs.
    pub stderr: T,
    /// `tr Λ*`.
    pub predicted: T,
    /// `max_t` of the across-run mean of `‖x_t‖²`.
    pub max_mean_sq_state: T,
    /// `max_t` of the across-run mean of `‖x_t - x̂_t‖²`.
    pub max_mean_sq_error: T,
    /// Across-run mean of `‖x_t‖²` for `t = 0..=horizon`.
    pub mean_sq_state: Vec<T>,
    pub mean_sq_error: Vec<T>,
    /// Per-run time-averaged cost, in run order.
    pub run_costs: Vec<T>,
    pub runs_completed: usize,
    pub aborted: Vec<AbortedRun>,
    pub horizon: usize,
    pub seed: u64,
    pub noise: NoiseKind,
    pub rng: &'static str,
    pub traces: Vec<TraceRow<T>>,
}

fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn draw_links<T: Scalar>(spec: &DncsSpec<T>, rng: &mut ChaCha8Rng, out: &mut [bool]) {
    for (n, g) in out.iter_mut().enumerate() {
        let u: f64 = rng.random();
        *g = u >= spec.prob(n).as_f64();
    }
}

fn draw_noise<T: Scalar>(kind: NoiseKind, rng: &mut ChaCha8Rng, out: &mut DVector<T>) {
    for v in out.iter_mut() {
        let z: f64 = match kind {
            NoiseKind::Gaussian => rng.sample(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        *v = T::lit(z);
    }
}

struct RunResult<T: Scalar> {
    total_cost: T,
    ms_state: Vec<T>,
    ms_error: Vec<T>,
    aborted: Option<usize>,
    trace: Vec<TraceRow<T>>,
}

fn simulate_run<'a, T: Scalar>(
    spec: &DncsSpec<T>,
    gains: impl Fn(usize) -> Strategy<'a, T>,
    steps: usize,
    cfg: &SimConfig,
    run: usize,
) -> Result<RunResult<T>> {
    let mut rng = run_rng(cfg.seed, run);
    let mut state = SimState::initial(spec);
    let mut gamma = vec![true; spec.n_subsystems()];
    let mut noise = DVector::zeros(spec.state_dim());
    let mut out = RunResult {
        total_cost: T::zero(),
        ms_state: Vec::with_capacity(steps + 1),
        ms_error: Vec::with_capacity(steps + 1),
        aborted: None,
        trace: Vec::new(),
    };
    let limit = T::lit(BLOWUP_LIMIT);
    for t in 0..steps {
        out.ms_state.push(state.x.norm_squared());
        out.ms_error.push((&state.x - &state.x_hat).norm_squared());
        let prev_gamma = gamma.clone();
        draw_links(spec, &mut rng, &mut gamma);
        draw_noise(cfg.noise, &mut rng, &mut noise);
        let strat = gains(t);
        let res = step(spec, &state, &gamma, &noise, &strat).map_err(|e| match e {
            Error::NonFiniteState { step, .. } => Error::NonFiniteState {
                run: run as u64,
                step,
            },
            other => other,
        });
        let res = match res {
            Ok(r) => r,
            Err(Error::NonFiniteState { .. }) => {
                out.aborted = Some(t);
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        if cfg.record_every > 0 && t % cfg.record_every == 0 {
            out.trace.push(TraceRow {
                t,
                run,
                x: state.x.clone(),
                x_hat: state.x_hat.clone(),
                gamma: prev_gamma,
                u: res.u.clone(),
                cost: res.cost,
            });
        }
        out.total_cost += res.cost;
        state = res.next;
        if state.x.amax() > limit {
            out.aborted = Some(t + 1);
            return Ok(out);
        }
    }
    out.ms_state.push(state.x.norm_squared());
    out.ms_error.push((&state.x - &state.x_hat).norm_squared());
    Ok(out)
}

/// Sum by recursive halving, so the result depends only on the order of
/// `xs`.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

fn mean_and_stderr<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        let nan = T::zero() / T::zero();
        return (nan, nan);
    }
    let nn = T::from_usize(n).unwrap();
    let mean = pairwise_sum(xs) / nn;
    if n < 2 {
        return (mean, T::zero());
    }
    let sq: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / (nn - T::one());
    (mean, (var / nn).sqrt())
}

fn column_means<T: Scalar>(series: &[&Vec<T>], len: usize) -> Vec<T> {
    let nn = T::from_usize(series.len().max(1)).unwrap();
    let mut col = Vec::with_capacity(series.len());
    (0..len)
        .map(|t| {
            col.clear();
            col.extend(series.iter().map(|s| s[t]));
            pairwise_sum(&col) / nn
        })
        .collect()
}

/// Independent closed-loop runs under the steady-state strategies.
///
/// Runs are simulated in parallel and aggregated in run order, so the
/// report depends only on the configuration.
pub fn run_monte_carlo<T: Scalar>(
    spec: &DncsSpec<T>,
    sol: &SteadySolution<T>,
    cfg: &SimConfig,
) -> Result<SimReport<T>> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    if cfg.runs == 0 || cfg.horizon == 0 {
        return Err(Error::invalid("sim", "runs and horizon must be positive"));
    }
    let results: Vec<RunResult<T>> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| simulate_run(spec, |_| Strategy::steady(sol), cfg.horizon, cfg, run))
        .collect::<Result<_>>()?;

    let horizon = T::from_usize(cfg.horizon).unwrap();
    let done: Vec<&RunResult<T>> = results.iter().filter(|r| r.aborted.is_none()).collect();
    let run_costs: Vec<T> = done.iter().map(|r| r.total_cost / horizon).collect();
    let (mean, stderr) = mean_and_stderr(&run_costs);
    let ms_state = column_means(
        &done.iter().map(|r| &r.ms_state).collect::<Vec<_>>(),
        cfg.horizon + 1,
    );
    let ms_error = column_means(
        &done.iter().map(|r| &r.ms_error).collect::<Vec<_>>(),
        cfg.horizon + 1,
    );
    let max_of = |v: &[T]| v.iter().cloned().fold(T::zero(), T::max);
    Ok(SimReport {
        mean_avg_cost: mean,
        stderr,
        predicted: sol.avg_cost,
        max_mean_sq_state: max_of(&ms_state),
        max_mean_sq_error: max_of(&ms_error),
        mean_sq_state: ms_state,
        mean_sq_error: ms_error,
        run_costs,
        runs_completed: done.len(),
        aborted: results
            .iter()
            .enumerate()
            .filter_map(|(run, r)| r.aborted.map(|step| AbortedRun { run, step }))
            .collect(),
        horizon: cfg.horizon,
        seed: cfg.seed,
        noise: cfg.noise,
        rng: RNG_NAME,
        traces: results.into_iter().flat_map(|r| r.trace).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub residual: T,
    pub pass: bool,
}

/// Both sides of
///
/// ```text
/// E[c(x_t, U_t) | H_t] + E[V_{t+1} | H_t] = tr Λ* + V_t,
/// V_t = x̂ᵀ P*⁰ x̂ + Σₙ tr(P*ⁿ Σⁿ)
/// ```
///
/// evaluated in closed form at the estimate `x_hat` and covariances
/// `sigma`. Passes when `|lhs - rhs| < tol · (1 + |rhs|)`.
pub fn verify_step_identity<T: Scalar>(
    spec: &DncsSpec<T>,
    sol: &SteadySolution<T>,
    x_hat: &DVector<T>,
    sigma: &[DMatrix<T>],
    tol: T,
) -> Result<IdentityCheck<T>> {
    if !sol.converged {
        return Err(Error::NotConverged);
    }
    let nsub = spec.n_subsystems();
    if x_hat.len() != spec.state_dim() {
        return Err(Error::dim("x_hat", spec.state_dim(), x_hat.len()));
    }
    if sigma.len() != nsub {
        return Err(Error::dim("sigma", nsub, sigma.len()));
    }
    let (a, b, q, r) = (
        spec.a().data(),
        spec.b().data(),
        spec.q().data(),
        spec.r().data(),
    );
    let p0 = sol.p0_star.data();
    let k0 = sol.k0_star.data();
    let quad = |m: &DMatrix<T>, v: &DVector<T>| v.dot(&(m * v));

    let mut cost = quad(&(q + k0.transpose() * r * k0), x_hat);
    let cl0 = a + b * k0;
    let mut next_v = quad(&(cl0.transpose() * p0 * &cl0), x_hat);
    let mut v_now = quad(p0, x_hat);
    for n in 0..nsub {
        let d = spec.state_partition().size(n);
        let s = &sigma[n];
        if s.shape() != (d, d) {
            return Err(Error::dim(
                format!("sigma[{n}]"),
                format!("{d}x{d}"),
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        let (kn, pn, p) = (&sol.kn_star[n], &sol.pn_star[n], spec.prob(n));
        cost += trace(&((spec.q_nn(n) + kn.transpose() * spec.r_nn(n) * kn) * s));
        let cl = spec.a_nn(n) + spec.b_nn(n) * kn;
        let s_next = DMatrix::identity(d, d) + &cl * s * cl.transpose();
        let p0_nn = sol.p0_star.block(n, n).clone_owned();
        next_v += (T::one() - p) * trace(&(p0_nn * &s_next)) + p * trace(&(pn * &s_next));
        v_now += trace(&(pn * s));
    }
    let lhs = cost + next_v;
    let rhs = sol.avg_cost + v_now;
    let residual = (lhs - rhs).abs();
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual,
        pass: residual < tol * (T::one() + rhs.abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteCheck<T> {
    /// Monte Carlo mean of the total cost over `t = 0..=T`.
    pub mc_cost: T,
    pub stderr: T,
    /// `J*_T` from the recursion.
    pub dp_cost: T,
    /// `(mc - dp) / stderr`, zero when both vanish.
    pub z_score: T,
}

/// Simulates the time-varying optimal strategies over `t = 0..=T` and
/// compares the mean total cost with `J*_T`.
pub fn finite_horizon_cost_check<T: Scalar>(
    spec: &DncsSpec<T>,
    horizon: usize,
    runs: usize,
    seed: u64,
    noise: NoiseKind,
) -> Result<FiniteCheck<T>> {
    let fin = finite_horizon_solve(spec, horizon)?;
    finite_cost_check_with(spec, &fin, runs, seed, noise)
}

/// [`finite_horizon_cost_check`] against an already computed solution.
pub fn finite_cost_check_with<T: Scalar>(
    spec: &DncsSpec<T>,
    fin: &FiniteSolution<T>,
    runs: usize,
    seed: u64,
    noise: NoiseKind,
) -> Result<FiniteCheck<T>> {
    if runs == 0 {
        return Err(Error::invalid("runs", "must be positive"));
    }
    let cfg = SimConfig {
        horizon: fin.horizon + 1,
        runs,
        seed,
        noise,
        record_every: 0,
    };
    let results: Vec<RunResult<T>> = (0..runs)
        .into_par_iter()
        .map(|run| {
            simulate_run(
                spec,
                |t| Strategy::finite(fin, t),
                fin.horizon + 1,
                &cfg,
                run,
            )
        })
        .collect::<Result<_>>()?;
    if let Some((run, r)) = results
        .iter()
        .enumerate()
        .find(|(_, r)| r.aborted.is_some())
    {
        return Err(Error::NonFiniteState {
            run: run as u64,
            step: r.aborted.unwrap_or(0),
        });
    }
    let totals: Vec<T> = results.iter().map(|r| r.total_cost).collect();
    let (mc, se) = mean_and_stderr(&totals);
    let diff = mc - fin.cost;
    let z = if diff == T::zero() && se == T::zero() {
        T::zero()
    } else if se == T::zero() {
        T::max_value().unwrap_or_else(T::one)
    } else {
        diff / se
    };
    Ok(FiniteCheck {
        mc_cost: mc,
        stderr: se,
        dp_cost: fin.cost,
        z_score: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{steady_solve, SteadyOptions};
    use nalgebra::{dmatrix, dvector};

    fn sensor(p: f64) -> (DncsSpec<f64>, SteadySolution<f64>) {
        let spec = DncsSpec::two_controller(
            dmatrix![2.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            DMatrix::identity(2, 2),
            p,
        )
        .unwrap();
        let sol = steady_solve(&spec, &SteadyOptions::default()).unwrap();
        (spec, sol)
    }

    #[test]
    fn drop_step_by_hand() {
        let (spec, sol) = sensor(0.1);
        let strat = Strategy::steady(&sol);
        let state = SimState {
            x: dvector![1.0],
            x_hat: dvector![1.0],
            sigma: vec![dmatrix![0.0]],
            t: 0,
            accumulated_cost: 0.0,
        };
        let out = step(&spec, &state, &[false], &dvector![0.0], &strat).unwrap();
        let cl = 2.0 + sol.k0_star.data()[(0, 0)];
        assert!((out.next.x[0] - cl).abs() < 1e-14);
        assert!((out.next.x_hat[0] - cl).abs() < 1e-14);
        assert_eq!(out.next.sigma[0], dmatrix![1.0]);
        let k = sol.k0_star.data()[(0, 0)];
        assert!((out.cost - (1.0 + k * k)).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_all_drops_stays_at_rest() {
        let (spec, sol) = sensor(0.1);
        let strat = Strategy::steady(&sol);
        let mut s = SimState::initial(&spec);
        for _ in 0..20 {
            s = step(&spec, &s, &[false], &dvector![0.0], &strat)
                .unwrap()
                .next;
        }
        assert_eq!(s.x[0], 0.0);
        assert_eq!(s.accumulated_cost, 0.0);
    }

    #[test]
    fn perfect_links_reproduce_centralized_loop() {
        let (spec, sol) = sensor(0.0);
        let strat = Strategy::steady(&sol);
        let cl = spec.a().data() + spec.b().data() * sol.k0_star.data();
        let mut s = SimState::initial(&spec);
        let mut x = dvector![0.0];
        for t in 0..30 {
            let w = dvector![(t as f64 * 0.7).sin()];
            s = step(&spec, &s, &[true], &w, &strat).unwrap().next;
            x = &cl * x + w;
            assert_eq!(s.x, s.x_hat);
            assert_eq!(s.sigma[0], dmatrix![0.0]);
            assert!((s.x[0] - x[0]).abs() < 1e-9 * (1.0 + x[0].abs()));
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let (spec, sol) = sensor(0.1);
        let cfg = SimConfig {
            horizon: 200,
            runs: 8,
            seed: 42,
            record_every: 10,
            ..SimConfig::default()
        };
        let a = run_monte_carlo(&spec, &sol, &cfg).unwrap();
        let b = run_monte_carlo(&spec, &sol, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.traces.len(), 8 * 20);
        let c = run_monte_carlo(&spec, &sol, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.mean_avg_cost, c.mean_avg_cost);
    }

    #[test]
    fn refuses_unconverged_solution() {
        let (spec, sol) = sensor(0.3);
        assert_eq!(
            run_monte_carlo(&spec, &sol, &SimConfig::default()),
            Err(Error::NotConverged)
        );
    }

    #[test]
    fn identity_at_origin() {
        let (spec, sol) = sensor(0.1);
        let chk =
            verify_step_identity(&spec, &sol, &dvector![0.0], &[dmatrix![0.0]], 1e-10).unwrap();
        assert!((chk.lhs - sol.avg_cost).abs() < 1e-10);
        assert!((chk.rhs - sol.avg_cost).abs() < 1e-10);
        assert!(chk.pass);
    }

    #[test]
    fn identity_scalar_point_matches_symbolic_value() {
        // Both sides evaluated exactly with P⁰ = 2 + √5 and
        // P¹ = (1 + 3.6 P⁰) / 0.6.
        const BOTH_SIDES: f64 = 64.922_985_673_746_950_6;
        let (spec, _) = sensor(0.1);
        let opts = SteadyOptions {
            tol: 1e-14,
            ..SteadyOptions::default()
        };
        let sol = steady_solve(&spec, &opts).unwrap();
        let chk =
            verify_step_identity(&spec, &sol, &dvector![1.0], &[dmatrix![2.0]], 1e-10).unwrap();
        assert!(chk.residual < 1e-10, "{}", chk.residual);
        assert!(chk.pass);
        assert!((chk.rhs - BOTH_SIDES).abs() < 1e-8, "{}", chk.rhs);
        assert!((chk.lhs - BOTH_SIDES).abs() < 1e-8, "{}", chk.lhs);
    }

    #[test]
    fn identity_fails_on_corrupted_solution() {
        let (spec, mut sol) = sensor(0.1);
        sol.pn_star[0][(0, 0)] *= 1.01;
        let chk =
            verify_step_identity(&spec, &sol, &dvector![1.0], &[dmatrix![2.0]], 1e-8).unwrap();
        assert!(!chk.pass);
        assert!(chk.residual > 1e-3);
    }

    #[test]
    fn finite_check_corner_cases() {
        let (spec, _) = sensor(0.1);
        let zero = finite_horizon_cost_check(&spec, 0, 10, 1, NoiseKind::Gaussian).unwrap();
        assert_eq!(zero.mc_cost, 0.0);
        assert_eq!(zero.dp_cost, 0.0);
        assert_eq!(zero.z_score, 0.0);
        let one = finite_horizon_cost_check(&spec, 1, 4000, 1, NoiseKind::Gaussian).unwrap();
        assert!((one.dp_cost - 1.0).abs() < 1e-15);
        assert!(one.z_score.abs() < 4.0, "{one:?}");
    }

    #[test]
    fn pairwise_sum_small_cases() {
        assert_eq!(pairwise_sum::<f64>(&[]), 0.0);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}
