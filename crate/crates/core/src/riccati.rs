//! Coupled Riccati recursions of the decentralized problem.
//!
//! The plant has `N` subsystems and `N + 1` controllers:
//!
//! ```text
//! x⁺ⁿ = Aⁿⁿ xⁿ + Bⁿⁿ uⁿ + Bⁿ⁰ u⁰ + wⁿ
//! ```
//!
//! The remote controller (input `u⁰`) sees subsystem `n` only when link `n`
//! delivers, which happens with probability `1 - pⁿ`. Subsystem indices are
//! zero-based throughout the API; the input partition puts the remote input
//! first, so the local input of subsystem `n` is input block `n + 1`.

use nalgebra::DMatrix;

use crate::blockmat::{
    block_diag, check_finite, is_pd, is_psd, is_symmetric, min_eigenvalue, symmetrize, trace,
    BlockMatrix, Partition, DEFAULT_TOL,
};
use crate::operators::{l_iden, l_zero, omega, pi_mix, psi};
use crate::{Error, Result, Scalar};

/// Plant, cost and link description.
#[derive(Debug, Clone, PartialEq)]
pub struct DncsSpec<T: Scalar> {
    state_part: Partition,
    input_part: Partition,
    a_blocks: Vec<DMatrix<T>>,
    b_local: Vec<DMatrix<T>>,
    b_remote: Vec<DMatrix<T>>,
    a: BlockMatrix<T>,
    b: BlockMatrix<T>,
    q: BlockMatrix<T>,
    r: BlockMatrix<T>,
    p: Vec<T>,
}

fn sym_tol<T: Scalar>(m: &DMatrix<T>) -> T {
    T::lit(DEFAULT_TOL) * (T::one() + m.amax())
}

impl<T: Scalar> DncsSpec<T> {
    /// Validates and assembles a spec.
    ///
    /// `a_blocks[n]` is `Aⁿⁿ`, `b_local[n]` is `Bⁿⁿ`, `b_remote[n]` is `Bⁿ⁰`.
    /// `q` is the full state cost and `r` the full input cost with the
    /// remote input first. Errors name the offending field.
    pub fn new(
        a_blocks: Vec<DMatrix<T>>,
        b_local: Vec<DMatrix<T>>,
        b_remote: Vec<DMatrix<T>>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        p: Vec<T>,
    ) -> Result<Self> {
        let n = a_blocks.len();
        if n == 0 {
            return Err(Error::invalid("A", "at least one subsystem is required"));
        }
        for (name, len) in [
            ("B_local", b_local.len()),
            ("B_remote", b_remote.len()),
            ("p", p.len()),
        ] {
            if len != n {
                return Err(Error::invalid(
                    name,
                    format!("expected {n} entries, got {len}"),
                ));
            }
        }
        let mut state_dims = Vec::with_capacity(n);
        for (i, a) in a_blocks.iter().enumerate() {
            if a.nrows() != a.ncols() || a.nrows() == 0 {
                return Err(Error::invalid(
                    format!("A[{i}]"),
                    format!(
                        "must be square and nonempty, got {}x{}",
                        a.nrows(),
                        a.ncols()
                    ),
                ));
            }
            finite(a, format!("A[{i}]"))?;
            state_dims.push(a.nrows());
        }
        let remote_dim = b_remote[0].ncols();
        if remote_dim == 0 {
            return Err(Error::invalid(
                "B_remote[0]",
                "remote input dimension must be positive",
            ));
        }
        let mut input_dims = vec![remote_dim];
        for i in 0..n {
            let (bl, br) = (&b_local[i], &b_remote[i]);
            if bl.nrows() != state_dims[i] || bl.ncols() == 0 {
                return Err(Error::invalid(
                    format!("B_local[{i}]"),
                    format!(
                        "expected {} rows and at least one column, got {}x{}",
                        state_dims[i],
                        bl.nrows(),
                        bl.ncols()
                    ),
                ));
            }
            if br.shape() != (state_dims[i], remote_dim) {
                return Err(Error::invalid(
                    format!("B_remote[{i}]"),
                    format!(
                        "expected {}x{remote_dim}, got {}x{}",
                        state_dims[i],
                        br.nrows(),
                        br.ncols()
                    ),
                ));
            }
            finite(bl, format!("B_local[{i}]"))?;
            finite(br, format!("B_remote[{i}]"))?;
            input_dims.push(bl.ncols());
        }
        for (i, &pi) in p.iter().enumerate() {
            if !(pi >= T::zero() && pi <= T::one()) {
                return Err(Error::invalid(
                    format!("p[{i}]"),
                    format!("{pi} is not in [0, 1]"),
                ));
            }
        }

        let state_part = Partition::new(state_dims)?;
        let input_part = Partition::new(input_dims)?;
        let (nx, nu) = (state_part.total(), input_part.total());

        if q.shape() != (nx, nx) {
            return Err(Error::invalid(
                "Q",
                format!("expected {nx}x{nx}, got {}x{}", q.nrows(), q.ncols()),
            ));
        }
        finite(&q, "Q".into())?;
        if !is_symmetric(&q, sym_tol(&q)) {
            return Err(Error::invalid("Q", "not symmetric"));
        }
        let q = symmetrize(&q);
        if !is_psd(&q, sym_tol(&q)) {
            return Err(Error::invalid(
                "Q",
                format!(
                    "not positive semidefinite (min eigenvalue {})",
                    min_eigenvalue(&q)?
                ),
            ));
        }
        if r.shape() != (nu, nu) {
            return Err(Error::invalid(
                "R",
                format!("expected {nu}x{nu}, got {}x{}", r.nrows(), r.ncols()),
            ));
        }
        finite(&r, "R".into())?;
        if !is_symmetric(&r, sym_tol(&r)) {
            return Err(Error::invalid("R", "not symmetric"));
        }
        let r = symmetrize(&r);
        if !is_pd(&r, sym_tol(&r)) {
            return Err(Error::invalid(
                "R",
                format!(
                    "not positive definite (min eigenvalue {})",
                    min_eigenvalue(&r)?
                ),
            ));
        }

        let a = BlockMatrix::square(block_diag(&a_blocks), state_part.clone())?;
        let mut b = BlockMatrix::zeros(state_part.clone(), input_part.clone());
        for i in 0..n {
            b.set_block(i, 0, &b_remote[i])?;
            b.set_block(i, i + 1, &b_local[i])?;
        }
        Ok(Self {
            q: BlockMatrix::square(q, state_part.clone())?,
            r: BlockMatrix::square(r, input_part.clone())?,
            state_part,
            input_part,
            a_blocks,
            b_local,
            b_remote,
            a,
            b,
            p,
        })
    }

    /// Single-plant spec with one remote and one local controller.
    pub fn two_controller(
        a: DMatrix<T>,
        b10: DMatrix<T>,
        b11: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
        p1: T,
    ) -> Result<Self> {
        Self::new(vec![a], vec![b11], vec![b10], q, r, vec![p1])
    }

    /// Same plant with different drop probabilities.
    pub fn with_probs(&self, p: Vec<T>) -> Result<Self> {
        Self::new(
            self.a_blocks.clone(),
            self.b_local.clone(),
            self.b_remote.clone(),
            self.q.data().clone(),
            self.r.data().clone(),
            p,
        )
    }

    pub fn n_subsystems(&self) -> usize {
        self.a_blocks.len()
    }

    pub fn state_partition(&self) -> &Partition {
        &self.state_part
    }

    /// Input partition, remote input first.
    pub fn input_partition(&self) -> &Partition {
        &self.input_part
    }

    pub fn state_dim(&self) -> usize {
        self.state_part.total()
    }

    pub fn input_dim(&self) -> usize {
        self.input_part.total()
    }

    pub fn a(&self) -> &BlockMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &BlockMatrix<T> {
        &self.b
    }

    pub fn q(&self) -> &BlockMatrix<T> {
        &self.q
    }

    pub fn r(&self) -> &BlockMatrix<T> {
        &self.r
    }

    pub fn a_nn(&self, n: usize) -> &DMatrix<T> {
        &self.a_blocks[n]
    }

    pub fn b_nn(&self, n: usize) -> &DMatrix<T> {
        &self.b_local[n]
    }

    pub fn b_n0(&self, n: usize) -> &DMatrix<T> {
        &self.b_remote[n]
    }

    pub fn q_nn(&self, n: usize) -> DMatrix<T> {
        self.q.block(n, n).clone_owned()
    }

    /// Local input cost, block `(n + 1, n + 1)` of `R`.
    pub fn r_nn(&self, n: usize) -> DMatrix<T> {
        self.r.block(n + 1, n + 1).clone_owned()
    }

    pub fn probs(&self) -> &[T] {
        &self.p
    }

    pub fn prob(&self, n: usize) -> T {
        self.p[n]
    }

    /// Converts every matrix to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Result<DncsSpec<U>> {
        let conv = |m: &DMatrix<T>| m.map(|x| U::lit(x.as_f64()));
        DncsSpec::new(
            self.a_blocks.iter().map(conv).collect(),
            self.b_local.iter().map(conv).collect(),
            self.b_remote.iter().map(conv).collect(),
            conv(self.q.data()),
            conv(self.r.data()),
            self.p.iter().map(|x| U::lit(x.as_f64())).collect(),
        )
    }

    /// `(1 - pⁿ)[P⁰]ₙₙ + pⁿ Pⁿ`, the cost-to-go seen by local controller `n`.
    pub fn local_mix(&self, n: usize, p0: &BlockMatrix<T>, pn: &DMatrix<T>) -> Result<DMatrix<T>> {
        let p = self.p[n];
        pi_mix(
            &[p0.block(n, n).clone_owned(), pn.clone()],
            &[T::one() - p, p],
        )
    }
}

fn finite<T: Scalar>(m: &DMatrix<T>, field: String) -> Result<()> {
    check_finite(m, "input").map_err(|_| Error::invalid(field, "non-finite entry"))
}

/// Coupled matrices at one time step.
#[derive(Debug, Clone, PartialEq)]
struct Coupled<T: Scalar> {
    p0: BlockMatrix<T>,
    pn: Vec<DMatrix<T>>,
}

impl<T: Scalar> Coupled<T> {
    fn zero(spec: &DncsSpec<T>) -> Self {
        let part = spec.state_partition().clone();
        Self {
            p0: BlockMatrix::zeros(part.clone(), part),
            pn: (0..spec.n_subsystems())
                .map(|n| {
                    let d = spec.state_partition().size(n);
                    DMatrix::zeros(d, d)
                })
                .collect(),
        }
    }

    /// One backward step together with the gains it implies.
    fn step(&self, spec: &DncsSpec<T>) -> Result<(Self, Gains<T>)> {
        let (a, b, q, r) = (
            spec.a().data(),
            spec.b().data(),
            spec.q().data(),
            spec.r().data(),
        );
        let p0 = self.p0.data();
        let next0 = omega(p0, q, r, a, b)?;
        let k0 = psi(p0, r, a, b)?;
        let mut pn = Vec::with_capacity(self.pn.len());
        let mut kn = Vec::with_capacity(self.pn.len());
        for n in 0..self.pn.len() {
            let mix = spec.local_mix(n, &self.p0, &self.pn[n])?;
            let (an, bn, qn, rn) = (spec.a_nn(n), spec.b_nn(n), spec.q_nn(n), spec.r_nn(n));
            pn.push(omega(&mix, &qn, &rn, an, bn)?);
            kn.push(psi(&mix, &rn, an, bn)?);
        }
        let next = Self {
            p0: self.p0.with_data(next0)?,
            pn,
        };
        let gains = Gains {
            k0: BlockMatrix::new(
                k0,
                spec.input_partition().clone(),
                spec.state_partition().clone(),
            )?,
            kn,
        };
        Ok((next, gains))
    }

    /// `Σₙ tr((1 - pⁿ)[P⁰]ₙₙ + pⁿ Pⁿ)` and the per-subsystem mixtures.
    fn lambda(&self, spec: &DncsSpec<T>) -> Result<(Vec<DMatrix<T>>, T)> {
        let blocks = (0..self.pn.len())
            .map(|n| spec.local_mix(n, &self.p0, &self.pn[n]))
            .collect::<Result<Vec<_>>>()?;
        let total = blocks.iter().fold(T::zero(), |acc, m| acc + trace(m));
        Ok((blocks, total))
    }

    fn max_trace(&self) -> T {
        self.pn
            .iter()
            .map(trace)
            .fold(trace(self.p0.data()), T::max)
    }

    fn is_finite(&self) -> bool {
        self.p0.data().iter().all(|x| x.is_finite())
            && self.pn.iter().all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// `max ‖ΔP‖_F / (1 + ‖P‖_F)` over all coupled matrices.
    fn change(&self, prev: &Self) -> T {
        let rel = |new: &DMatrix<T>, old: &DMatrix<T>| (new - old).norm() / (T::one() + new.norm());
        self.pn
            .iter()
            .zip(&prev.pn)
            .map(|(a, b)| rel(a, b))
            .fold(rel(self.p0.data(), prev.p0.data()), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Gains<T: Scalar> {
    k0: BlockMatrix<T>,
    kn: Vec<DMatrix<T>>,
}

/// Backward recursion over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSolution<T: Scalar> {
    pub horizon: usize,
    /// `P⁰_t` for `t = 0..=T+1`.
    pub p0_seq: Vec<BlockMatrix<T>>,
    /// `Pⁿ_t`, indexed `[t][n]`, for `t = 0..=T+1`.
    pub pn_seq: Vec<Vec<DMatrix<T>>>,
    /// `K⁰_t` for `t = 0..=T`.
    pub k0_seq: Vec<BlockMatrix<T>>,
    /// `Kⁿ_t`, indexed `[t][n]`, for `t = 0..=T`.
    pub kn_seq: Vec<Vec<DMatrix<T>>>,
    /// Optimal expected total cost `J*_T`.
    pub cost: T,
}

/// Runs the coupled recursion backward from `P_{T+1} = 0`.
pub fn finite_horizon_solve<T: Scalar>(
    spec: &DncsSpec<T>,
    horizon: usize,
) -> Result<FiniteSolution<T>> {
    let mut states = vec![Coupled::zero(spec)];
    let mut gains = Vec::with_capacity(horizon + 1);
    let mut cost = T::zero();
    for _ in 0..=horizon {
        let cur = states.last().expect("nonempty");
        cost += cur.lambda(spec)?.1;
        let (next, g) = cur.step(spec)?;
        states.push(next);
        gains.push(g);
    }
    states.reverse();
    gains.reverse();
    let (p0_seq, pn_seq) = states.into_iter().map(|c| (c.p0, c.pn)).unzip();
    let (k0_seq, kn_seq) = gains.into_iter().map(|g| (g.k0, g.kn)).unzip();
    Ok(FiniteSolution {
        horizon,
        p0_seq,
        pn_seq,
        k0_seq,
        kn_seq,
        cost,
    })
}

/// Stopping rule for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Relative change `‖ΔP‖_F / (1 + ‖P‖_F)` declared converged.
    pub tol: f64,
    pub max_iter: usize,
    /// Any trace above this means divergence.
    pub divergence_cap: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            divergence_cap: 1e12,
        }
    }
}

impl SteadyOptions {
    /// The requested tolerance, floored a little above machine precision so
    /// single-precision runs can terminate.
    fn tol<T: Scalar>(&self) -> T {
        T::lit(self.tol).max(T::default_epsilon() * T::lit(8.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SteadyOutcome {
    Converged,
    Diverged,
    IterationsExhausted,
}

impl SteadyOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            SteadyOutcome::Converged => "converged",
            SteadyOutcome::Diverged => "diverged",
            SteadyOutcome::IterationsExhausted => "iterations_exhausted",
        }
    }
}

/// Fixed points of the coupled recursion and the gains they define.
///
/// On non-convergence the matrices are the last iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution<T: Scalar> {
    pub p0_star: BlockMatrix<T>,
    pub pn_star: Vec<DMatrix<T>>,
    pub k0_star: BlockMatrix<T>,
    pub kn_star: Vec<DMatrix<T>>,
    /// `(1 - pⁿ)[P*⁰]ₙₙ + pⁿ P*ⁿ` per subsystem.
    pub lambda_blocks: Vec<DMatrix<T>>,
    /// `tr Λ*`, the optimal average cost per step.
    pub avg_cost: T,
    pub iterations: usize,
    pub converged: bool,
    pub outcome: SteadyOutcome,
    /// Relative change at the last iteration.
    pub last_change: T,
    /// Violated standing assumptions, for information only.
    pub warnings: Vec<String>,
}

impl<T: Scalar> SteadySolution<T> {
    /// `Λ*` as a single matrix, available when all subsystems share a
    /// state dimension.
    pub fn lambda_star(&self) -> Option<DMatrix<T>> {
        let first = self.lambda_blocks.first()?;
        if self
            .lambda_blocks
            .iter()
            .any(|m| m.shape() != first.shape())
        {
            return None;
        }
        Some(
            self.lambda_blocks
                .iter()
                .skip(1)
                .fold(first.clone(), |acc, m| acc + m),
        )
    }
}

/// Iterates the coupled recursion from zero until it settles, diverges, or
/// runs out of iterations. Non-convergence is a reported outcome.
pub fn steady_solve<T: Scalar>(
    spec: &DncsSpec<T>,
    opts: &SteadyOptions,
) -> Result<SteadySolution<T>> {
    let tol: T = opts.tol();
    let cap = T::lit(opts.divergence_cap);
    let mut cur = Coupled::zero(spec);
    let mut change = T::zero();
    let mut outcome = SteadyOutcome::IterationsExhausted;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (next, _) = cur.step(spec)?;
        iterations += 1;
        change = next.change(&cur);
        let blew_up = !next.is_finite() || next.max_trace() > cap;
        if blew_up {
            if next.is_finite() {
                cur = next;
            }
            outcome = SteadyOutcome::Diverged;
            break;
        }
        cur = next;
        if change < tol {
            outcome = SteadyOutcome::Converged;
            break;
        }
    }
    let (_, gains) = cur.step(spec)?;
    let (lambda_blocks, avg_cost) = cur.lambda(spec)?;
    let warnings =
        crate::thresholds::assumption_warnings(spec, T::lit(crate::thresholds::DEFAULT_RANK_TOL))
            .unwrap_or_default();
    Ok(SteadySolution {
        p0_star: cur.p0,
        pn_star: cur.pn,
        k0_star: gains.k0,
        kn_star: gains.kn,
        lambda_blocks,
        avg_cost,
        iterations,
        converged: outcome == SteadyOutcome::Converged,
        outcome,
        last_change: change,
        warnings,
    })
}

/// Treats supplied `P⁰`, `Pⁿ` as a fixed point: gains and `Λ*` are computed
/// from them and the solution is marked converged. `last_change` holds the
/// fixed-point residual, so a bad guess is visible but not rejected.
pub fn solution_from_matrices<T: Scalar>(
    spec: &DncsSpec<T>,
    p0: DMatrix<T>,
    pn: Vec<DMatrix<T>>,
) -> Result<SteadySolution<T>> {
    let nx = spec.state_dim();
    if p0.shape() != (nx, nx) {
        return Err(Error::invalid(
            "P0",
            format!("expected {nx}x{nx}, got {}x{}", p0.nrows(), p0.ncols()),
        ));
    }
    if pn.len() != spec.n_subsystems() {
        return Err(Error::invalid(
            "Pn",
            format!("expected {} entries, got {}", spec.n_subsystems(), pn.len()),
        ));
    }
    for (n, p) in pn.iter().enumerate() {
        let d = spec.state_partition().size(n);
        if p.shape() != (d, d) {
            return Err(Error::invalid(
                format!("Pn[{n}]"),
                format!("expected {d}x{d}, got {}x{}", p.nrows(), p.ncols()),
            ));
        }
    }
    finite(&p0, "P0".into())?;
    for (n, p) in pn.iter().enumerate() {
        finite(p, format!("Pn[{n}]"))?;
    }
    let cur = Coupled {
        p0: BlockMatrix::square(p0, spec.state_partition().clone())?,
        pn,
    };
    let (next, gains) = cur.step(spec)?;
    let (lambda_blocks, avg_cost) = cur.lambda(spec)?;
    let warnings =
        crate::thresholds::assumption_warnings(spec, T::lit(crate::thresholds::DEFAULT_RANK_TOL))
            .unwrap_or_default();
    Ok(SteadySolution {
        last_change: next.change(&cur),
        p0_star: cur.p0,
        pn_star: cur.pn,
        k0_star: gains.k0,
        kn_star: gains.kn,
        lambda_blocks,
        avg_cost,
        iterations: 0,
        converged: true,
        outcome: SteadyOutcome::Converged,
        warnings,
    })
}

/// Steady state of the single-plant problem with one remote and one local
/// controller, from its own pair of fixed-point equations.
///
/// `r` is partitioned as `[u⁰, u¹]` with `u⁰` of width `b10.ncols()`.
#[allow(clippy::too_many_arguments)]
pub fn two_controller_solve<T: Scalar>(
    a: &DMatrix<T>,
    b10: &DMatrix<T>,
    b11: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p1: T,
    opts: &SteadyOptions,
) -> Result<SteadySolution<T>> {
    let spec = DncsSpec::two_controller(
        a.clone(),
        b10.clone(),
        b11.clone(),
        q.clone(),
        r.clone(),
        p1,
    )?;
    let (q, r) = (spec.q().data(), spec.r().data());
    let b = spec.b().data();
    let r11 = spec.r_nn(0);
    let mix = |p0: &DMatrix<T>, p1m: &DMatrix<T>| p0 * (T::one() - p1) + p1m * p1;
    let tol: T = opts.tol();
    let cap = T::lit(opts.divergence_cap);
    let d = a.nrows();
    let (mut p0, mut pl) = (DMatrix::zeros(d, d), DMatrix::zeros(d, d));
    let mut change = T::zero();
    let mut outcome = SteadyOutcome::IterationsExhausted;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let n0 = omega(&p0, q, r, a, b)?;
        let n1 = omega(&mix(&p0, &pl), q, &r11, a, b11)?;
        iterations += 1;
        let rel = |new: &DMatrix<T>, old: &DMatrix<T>| (new - old).norm() / (T::one() + new.norm());
        change = rel(&n0, &p0).max(rel(&n1, &pl));
        let ok = n0.iter().chain(n1.iter()).all(|x| x.is_finite());
        if !ok || trace(&n0).max(trace(&n1)) > cap {
            if ok {
                (p0, pl) = (n0, n1);
            }
            outcome = SteadyOutcome::Diverged;
            break;
        }
        (p0, pl) = (n0, n1);
        if change < tol {
            outcome = SteadyOutcome::Converged;
            break;
        }
    }
    let k0 = psi(&p0, r, a, b)?;
    let lam = mix(&p0, &pl);
    let k1 = psi(&lam, &r11, a, b11)?;
    let warnings =
        crate::thresholds::assumption_warnings(&spec, T::lit(crate::thresholds::DEFAULT_RANK_TOL))
            .unwrap_or_default();
    Ok(SteadySolution {
        p0_star: BlockMatrix::square(p0, spec.state_partition().clone())?,
        pn_star: vec![pl],
        k0_star: BlockMatrix::new(
            k0,
            spec.input_partition().clone(),
            spec.state_partition().clone(),
        )?,
        kn_star: vec![k1],
        avg_cost: trace(&lam),
        lambda_blocks: vec![lam],
        iterations,
        converged: outcome == SteadyOutcome::Converged,
        outcome,
        last_change: change,
        warnings,
    })
}

/// Largest relative fixed-point residual `‖Ω(P) - P‖_F / (1 + ‖P‖_F)` of a
/// steady solution.
pub fn steady_residual<T: Scalar>(spec: &DncsSpec<T>, sol: &SteadySolution<T>) -> Result<T> {
    let cur = Coupled {
        p0: sol.p0_star.clone(),
        pn: sol.pn_star.clone(),
    };
    let (next, _) = cur.step(spec)?;
    Ok(next.change(&cur))
}

/// Lifted matrices `(Q, R, A, B)` of subsystem `n` at full dimension.
pub fn lifted_local<T: Scalar>(
    spec: &DncsSpec<T>,
    n: usize,
) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    Ok((
        l_zero(spec.q(), &spec.q_nn(n), n, n)?.into_inner(),
        l_iden(spec.r(), &spec.r_nn(n), n + 1)?.into_inner(),
        l_zero(spec.a(), spec.a_nn(n), n, n)?.into_inner(),
        l_zero(spec.b(), spec.b_nn(n), n, n + 1)?.into_inner(),
    ))
}

/// Equal-dimension form of the recursion: `P̄⁰_t` and `P̄ⁿ_t`, all of full
/// state dimension. Indexed `[t][m]` with `m = 0..=N`, `t = 0..=T+1`.
pub fn bar_representation<T: Scalar>(
    spec: &DncsSpec<T>,
    horizon: usize,
) -> Result<Vec<Vec<DMatrix<T>>>> {
    let n = spec.n_subsystems();
    let d = spec.state_dim();
    let (a, b, q, r) = (
        spec.a().data(),
        spec.b().data(),
        spec.q().data(),
        spec.r().data(),
    );
    let lifted = (0..n)
        .map(|i| lifted_local(spec, i))
        .collect::<Result<Vec<_>>>()?;
    let mut seq = vec![vec![DMatrix::zeros(d, d); n + 1]];
    for _ in 0..=horizon {
        let cur = seq.last().expect("nonempty");
        let mut next = Vec::with_capacity(n + 1);
        next.push(omega(&cur[0], q, r, a, b)?);
        for (i, (qi, ri, ai, bi)) in lifted.iter().enumerate() {
            let p = spec.prob(i);
            let mix = pi_mix(&[cur[0].clone(), cur[i + 1].clone()], &[T::one() - p, p])?;
            next.push(omega(&mix, qi, ri, ai, bi)?);
        }
        seq.push(next);
    }
    seq.reverse();
    Ok(seq)
}
