//! Auxiliary Markov jump linear systems and their stability tests.
//!
//! The coupled recursion of the decentralized problem is the coupled
//! Riccati recursion of a jump system whose mode `0` is the full plant and
//! whose mode `n` keeps only subsystem `n`. The jump system is never
//! simulated; it exists to import the stabilizability and detectability
//! tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blockmat::{
    block_diag, check_finite, is_pd, is_psd, psd_sqrt, spectral_radius, trace, DEFAULT_EIG_TOL,
    DEFAULT_TOL,
};
use crate::operators::{check_probability_row, omega, pi_mix, psi};
use crate::riccati::{lifted_local, DncsSpec, SteadyOptions, SteadyOutcome};
use crate::thresholds::SQRT_CLIP;
use crate::{Error, Result, Scalar};

/// Largest per-mode state dimension the lifted stability matrix is built
/// for.
pub const MAX_KRON_STATE: usize = 12;
/// Largest mode count the lifted stability matrix is built for.
pub const MAX_KRON_MODES: usize = 9;

/// Mode-indexed system, cost and transition matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MjlsModel<T: Scalar> {
    a: Vec<DMatrix<T>>,
    b: Vec<DMatrix<T>>,
    q: Vec<DMatrix<T>>,
    r: Vec<DMatrix<T>>,
    theta: DMatrix<T>,
}

impl<T: Scalar> MjlsModel<T> {
    pub fn new(
        a: Vec<DMatrix<T>>,
        b: Vec<DMatrix<T>>,
        q: Vec<DMatrix<T>>,
        r: Vec<DMatrix<T>>,
        theta: DMatrix<T>,
    ) -> Result<Self> {
        let modes = a.len();
        if modes == 0 {
            return Err(Error::invalid("A", "at least one mode is required"));
        }
        for (name, len) in [("B", b.len()), ("Q", q.len()), ("R", r.len())] {
            if len != modes {
                return Err(Error::invalid(
                    name,
                    format!("expected {modes} modes, got {len}"),
                ));
            }
        }
        if theta.shape() != (modes, modes) {
            return Err(Error::dim(
                "Theta",
                format!("{modes}x{modes}"),
                format!("{}x{}", theta.nrows(), theta.ncols()),
            ));
        }
        let (n, m) = (a[0].nrows(), b[0].ncols());
        let tol = T::lit(DEFAULT_TOL);
        for k in 0..modes {
            let want = [
                (&a[k], (n, n), "A"),
                (&b[k], (n, m), "B"),
                (&q[k], (n, n), "Q"),
                (&r[k], (m, m), "R"),
            ];
            for (mat, shape, name) in want {
                if mat.shape() != shape {
                    return Err(Error::invalid(
                        format!("{name}[{k}]"),
                        format!(
                            "expected {}x{}, got {}x{}",
                            shape.0,
                            shape.1,
                            mat.nrows(),
                            mat.ncols()
                        ),
                    ));
                }
                check_finite(mat, "mode matrix")
                    .map_err(|_| Error::invalid(format!("{name}[{k}]"), "non-finite entry"))?;
            }
            if !is_psd(&q[k], tol * (T::one() + q[k].amax())) {
                return Err(Error::invalid(
                    format!("Q[{k}]"),
                    "not positive semidefinite",
                ));
            }
            if !is_pd(&r[k], tol * (T::one() + r[k].amax())) {
                return Err(Error::invalid(format!("R[{k}]"), "not positive definite"));
            }
            let row: Vec<T> = theta.row(k).iter().cloned().collect();
            check_probability_row(&row)?;
        }
        Ok(Self { a, b, q, r, theta })
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].ncols()
    }

    pub fn a(&self, m: usize) -> &DMatrix<T> {
        &self.a[m]
    }

    pub fn b(&self, m: usize) -> &DMatrix<T> {
        &self.b[m]
    }

    pub fn q(&self, m: usize) -> &DMatrix<T> {
        &self.q[m]
    }

    pub fn r(&self, m: usize) -> &DMatrix<T> {
        &self.r[m]
    }

    pub fn theta(&self) -> &DMatrix<T> {
        &self.theta
    }

    fn theta_row(&self, m: usize) -> Vec<T> {
        self.theta.row(m).iter().cloned().collect()
    }

    /// `Σ_k θ^{mk} P(k)`.
    pub fn mix(&self, m: usize, p: &[DMatrix<T>]) -> Result<DMatrix<T>> {
        pi_mix(p, &self.theta_row(m))
    }
}

/// Jump system of the single-plant problem with one local controller.
pub fn build_auxiliary_2c<T: Scalar>(
    a: &DMatrix<T>,
    b10: &DMatrix<T>,
    b11: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    p1: T,
) -> Result<MjlsModel<T>> {
    let d = a.nrows();
    if b10.nrows() != d || b11.nrows() != d {
        return Err(Error::dim("B rows", d, b10.nrows().max(b11.nrows())));
    }
    let (m0, m1) = (b10.ncols(), b11.ncols());
    if r.shape() != (m0 + m1, m0 + m1) {
        return Err(Error::dim(
            "R",
            format!("{0}x{0}", m0 + m1),
            format!("{}x{}", r.nrows(), r.ncols()),
        ));
    }
    let mut b = DMatrix::zeros(d, m0 + m1);
    b.columns_mut(0, m0).copy_from(b10);
    b.columns_mut(m0, m1).copy_from(b11);
    let mut b1 = DMatrix::zeros(d, m0 + m1);
    b1.columns_mut(m0, m1).copy_from(b11);
    let r11 = r.view((m0, m0), (m1, m1)).clone_owned();
    let r1 = block_diag(&[DMatrix::identity(m0, m0), r11]);
    let theta = DMatrix::from_row_slice(2, 2, &[T::one(), T::zero(), T::one() - p1, p1]);
    MjlsModel::new(
        vec![a.clone(), a.clone()],
        vec![b, b1],
        vec![q.clone(), q.clone()],
        vec![r.clone(), r1],
        theta,
    )
}

/// Jump system with one mode per subsystem plus the full-plant mode `0`.
pub fn build_auxiliary_nc<T: Scalar>(spec: &DncsSpec<T>) -> Result<MjlsModel<T>> {
    let n = spec.n_subsystems();
    let mut a = vec![spec.a().data().clone()];
    let mut b = vec![spec.b().data().clone()];
    let mut q = vec![spec.q().data().clone()];
    let mut r = vec![spec.r().data().clone()];
    let mut theta = DMatrix::zeros(n + 1, n + 1);
    theta[(0, 0)] = T::one();
    for i in 0..n {
        let (qi, ri, ai, bi) = lifted_local(spec, i)?;
        a.push(ai);
        b.push(bi);
        q.push(qi);
        r.push(ri);
        let p = spec.prob(i);
        theta[(i + 1, 0)] = T::one() - p;
        theta[(i + 1, i + 1)] += p;
    }
    MjlsModel::new(a, b, q, r, theta)
}

/// Per-mode matrices of the finite-horizon coupled recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct MjlsFinite<T: Scalar> {
    /// `P◇_t(m)`, indexed `[t][m]`, `t = 0..=T+1`.
    pub p: Vec<Vec<DMatrix<T>>>,
    /// `K◇_t(m)`, indexed `[t][m]`, `t = 0..=T`.
    pub k: Vec<Vec<DMatrix<T>>>,
}

fn coupled_step<T: Scalar>(
    model: &MjlsModel<T>,
    cur: &[DMatrix<T>],
) -> Result<(Vec<DMatrix<T>>, Vec<DMatrix<T>>)> {
    let mut next = Vec::with_capacity(model.modes());
    let mut gains = Vec::with_capacity(model.modes());
    for m in 0..model.modes() {
        let mix = model.mix(m, cur)?;
        next.push(omega(
            &mix,
            &model.q[m],
            &model.r[m],
            &model.a[m],
            &model.b[m],
        )?);
        gains.push(psi(&mix, &model.r[m], &model.a[m], &model.b[m])?);
    }
    Ok((next, gains))
}

fn zero_set<T: Scalar>(model: &MjlsModel<T>) -> Vec<DMatrix<T>> {
    let d = model.state_dim();
    vec![DMatrix::zeros(d, d); model.modes()]
}

/// Backward coupled recursion from `P◇_{T+1}(m) = 0`.
pub fn mjls_finite_recursions<T: Scalar>(
    model: &MjlsModel<T>,
    horizon: usize,
) -> Result<MjlsFinite<T>> {
    let mut p = vec![zero_set(model)];
    let mut k = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        let (next, gains) = coupled_step(model, p.last().expect("nonempty"))?;
        p.push(next);
        k.push(gains);
    }
    p.reverse();
    k.reverse();
    Ok(MjlsFinite { p, k })
}

/// Outcome of iterating the coupled recursion to a steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct DcareSolution<T: Scalar> {
    pub p: Vec<DMatrix<T>>,
    pub k: Vec<DMatrix<T>>,
    pub iterations: usize,
    pub converged: bool,
    pub outcome: SteadyOutcome,
    pub last_change: T,
}

/// Value iteration on the coupled algebraic Riccati equations, with the
/// stopping rule of the decentralized steady-state solver.
pub fn dcare_solve<T: Scalar>(
    model: &MjlsModel<T>,
    opts: &SteadyOptions,
) -> Result<DcareSolution<T>> {
    let tol = T::lit(opts.tol).max(T::default_epsilon() * T::lit(8.0));
    let cap = T::lit(opts.divergence_cap);
    let mut cur = zero_set(model);
    let mut outcome = SteadyOutcome::IterationsExhausted;
    let mut change = T::zero();
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (next, _) = coupled_step(model, &cur)?;
        iterations += 1;
        change = next
            .iter()
            .zip(&cur)
            .map(|(a, b)| (a - b).norm() / (T::one() + a.norm()))
            .fold(T::zero(), T::max);
        let finite = next.iter().all(|m| m.iter().all(|x| x.is_finite()));
        if !finite || next.iter().map(trace).fold(T::zero(), T::max) > cap {
            if finite {
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
    let (_, k) = coupled_step(model, &cur)?;
    Ok(DcareSolution {
        p: cur,
        k,
        iterations,
        converged: outcome == SteadyOutcome::Converged,
        outcome,
        last_change: change,
    })
}

/// Verdict of a lifted spectral-radius test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityTest<T> {
    pub schur_stable: bool,
    pub rho: T,
    /// Side of the lifted matrix.
    pub matrix_dim: usize,
}

/// `(Θᵀ ⊗ I) · diag(M(m) ⊗ M(m))`.
///
/// This ordering reproduces the block upper-triangular form, with
/// `θ^{km}` multiplying `M(m) ⊗ M(m)` in block `(k, m)`. The reverse
/// product has the same spectrum.
pub fn lifted_matrix<T: Scalar>(theta: &DMatrix<T>, closed: &[DMatrix<T>]) -> Result<DMatrix<T>> {
    let modes = closed.len();
    let d = closed.first().map_or(0, |m| m.nrows());
    if theta.shape() != (modes, modes) {
        return Err(Error::dim("Theta", modes, theta.nrows()));
    }
    if d > MAX_KRON_STATE || modes > MAX_KRON_MODES {
        return Err(Error::TooLarge { dim: modes * d * d });
    }
    let dd = d * d;
    let mut out = DMatrix::zeros(modes * dd, modes * dd);
    for (m, cl) in closed.iter().enumerate() {
        if cl.shape() != (d, d) {
            return Err(Error::dim(
                format!("closed loop {m}"),
                format!("{d}x{d}"),
                format!("{}x{}", cl.nrows(), cl.ncols()),
            ));
        }
        let kr = cl.kronecker(cl);
        for k in 0..modes {
            let w = theta[(m, k)];
            if w != T::zero() {
                out.view_mut((k * dd, m * dd), (dd, dd))
                    .copy_from(&(&kr * w));
            }
        }
    }
    Ok(out)
}

fn lifted_test<T: Scalar>(model: &MjlsModel<T>, closed: &[DMatrix<T>]) -> Result<StabilityTest<T>> {
    let big = lifted_matrix(&model.theta, closed)?;
    let rho = spectral_radius(&big, T::lit(DEFAULT_EIG_TOL))?;
    Ok(StabilityTest {
        schur_stable: rho < T::one(),
        rho,
        matrix_dim: big.nrows(),
    })
}

/// `A(m) + B(m) K(m)` per mode.
pub fn closed_loops<T: Scalar>(
    model: &MjlsModel<T>,
    gains: &[DMatrix<T>],
) -> Result<Vec<DMatrix<T>>> {
    if gains.len() != model.modes() {
        return Err(Error::dim("gains", model.modes(), gains.len()));
    }
    let (n, m) = (model.state_dim(), model.input_dim());
    gains
        .iter()
        .enumerate()
        .map(|(k, g)| {
            if g.shape() != (m, n) {
                return Err(Error::dim(
                    format!("K[{k}]"),
                    format!("{m}x{n}"),
                    format!("{}x{}", g.nrows(), g.ncols()),
                ));
            }
            Ok(&model.a[k] + &model.b[k] * g)
        })
        .collect()
}

/// `A(m) + H(m) Q(m)^{1/2}` per mode.
pub fn injected_loops<T: Scalar>(
    model: &MjlsModel<T>,
    injections: &[DMatrix<T>],
) -> Result<Vec<DMatrix<T>>> {
    if injections.len() != model.modes() {
        return Err(Error::dim("injections", model.modes(), injections.len()));
    }
    let n = model.state_dim();
    injections
        .iter()
        .enumerate()
        .map(|(k, h)| {
            if h.shape() != (n, n) {
                return Err(Error::dim(
                    format!("H[{k}]"),
                    format!("{n}x{n}"),
                    format!("{}x{}", h.nrows(), h.ncols()),
                ));
            }
            Ok(&model.a[k] + h * psd_sqrt(&model.q[k], T::lit(SQRT_CLIP))?)
        })
        .collect()
}

/// Stochastic stabilizability test for the given per-mode gains.
pub fn ss_test<T: Scalar>(model: &MjlsModel<T>, gains: &[DMatrix<T>]) -> Result<StabilityTest<T>> {
    lifted_test(model, &closed_loops(model, gains)?)
}

/// Stochastic detectability test for the given per-mode output injections.
pub fn sd_test<T: Scalar>(
    model: &MjlsModel<T>,
    injections: &[DMatrix<T>],
) -> Result<StabilityTest<T>> {
    lifted_test(model, &injected_loops(model, injections)?)
}

/// Diagonal-block radii of the lifted matrix when mode `0` is absorbing
/// and every other mode only returns to itself or to `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutResult<T> {
    /// `ρ(M(0))²` followed by `θ^{mm} ρ(M(m))²`.
    pub radii: Vec<T>,
    pub schur_stable: bool,
}

impl<T: Scalar> ShortcutResult<T> {
    pub fn rho(&self) -> T {
        self.radii.iter().cloned().fold(T::zero(), T::max)
    }
}

fn has_absorbing_pattern<T: Scalar>(theta: &DMatrix<T>) -> bool {
    let n = theta.nrows();
    (1..n).all(|j| theta[(0, j)] == T::zero())
        && (1..n).all(|i| (1..n).all(|j| j == i || theta[(i, j)] == T::zero()))
}

/// Block-triangular evaluation of the lifted radius, using
/// `ρ(M ⊗ M) = ρ(M)²`.
pub fn triangular_shortcut<T: Scalar>(
    model: &MjlsModel<T>,
    closed: &[DMatrix<T>],
) -> Result<ShortcutResult<T>> {
    if !has_absorbing_pattern(&model.theta) {
        return Err(Error::UnrecognizedPattern);
    }
    if closed.len() != model.modes() {
        return Err(Error::dim("closed loops", model.modes(), closed.len()));
    }
    let radii = closed
        .iter()
        .enumerate()
        .map(|(m, cl)| {
            let r = spectral_radius(cl, T::lit(DEFAULT_EIG_TOL))?;
            Ok(model.theta[(m, m)] * r * r)
        })
        .collect::<Result<Vec<_>>>()?;
    let schur_stable = radii.iter().all(|&r| r < T::one());
    Ok(ShortcutResult {
        radii,
        schur_stable,
    })
}

/// Output-injection candidate for one mode minimizing `ρ(A + HC)`.
///
/// Starts from `H = 0` and from the gain of the dual Riccati recursion,
/// then refines the better one with a seeded random-restart pattern search.
pub fn search_injection<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    seed: u64,
    restarts: usize,
) -> Result<(DMatrix<T>, T)> {
    let n = a.nrows();
    let eig = T::lit(DEFAULT_EIG_TOL);
    let rho = |h: &DMatrix<T>| spectral_radius(&(a + h * c), eig);
    let mut best = DMatrix::zeros(n, c.nrows());
    let mut best_rho = rho(&best)?;

    if let Some(h) = dual_riccati_injection(a, c)? {
        let r = rho(&h)?;
        if r < best_rho {
            best = h;
            best_rho = r;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| T::lit(rng.random_range(-1.0..1.0));
    for restart in 0..=restarts {
        let mut h = if restart == 0 {
            best.clone()
        } else {
            best.map(|x| x + unit(&mut rng))
        };
        let mut cur = rho(&h)?;
        let mut step = T::lit(0.5);
        while step > T::lit(1e-6) {
            let mut improved = false;
            for _ in 0..4 * h.len().max(1) {
                let trial = h.map(|x| x + unit(&mut rng) * step);
                let r = rho(&trial)?;
                if r < cur {
                    h = trial;
                    cur = r;
                    improved = true;
                }
            }
            if !improved {
                step *= T::lit(0.5);
            }
        }
        if cur < best_rho {
            best = h;
            best_rho = cur;
        }
    }
    Ok((best, best_rho))
}

/// `H = Ψ(S, I, Aᵀ, Cᵀ)ᵀ` at the limit of `S ← Ω(S, I, I, Aᵀ, Cᵀ)`, if the
/// iteration settles.
fn dual_riccati_injection<T: Scalar>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<Option<DMatrix<T>>> {
    let (n, p) = (a.nrows(), c.nrows());
    if p == 0 {
        return Ok(None);
    }
    let (at, ct) = (a.transpose(), c.transpose());
    let (i_n, i_p) = (DMatrix::identity(n, n), DMatrix::identity(p, p));
    let mut s = DMatrix::zeros(n, n);
    for _ in 0..5000 {
        let next = omega(&s, &i_n, &i_p, &at, &ct)?;
        let done = (&next - &s).norm() <= T::lit(1e-12) * (T::one() + next.norm());
        s = next;
        if !s.iter().all(|x| x.is_finite()) || trace(&s) > T::lit(1e12) {
            return Ok(None);
        }
        if done {
            break;
        }
    }
    Ok(Some(psi(&s, &i_p, &at, &ct)?.transpose()))
}

/// Per-mode injections for [`sd_test`], each found by [`search_injection`].
pub fn find_injections<T: Scalar>(
    model: &MjlsModel<T>,
    seed: u64,
    restarts: usize,
) -> Result<Vec<DMatrix<T>>> {
    (0..model.modes())
        .map(|m| {
            let c = psd_sqrt(&model.q[m], T::lit(SQRT_CLIP))?;
            let (h, _) = search_injection(&model.a[m], &c, seed.wrapping_add(m as u64), restarts)?;
            Ok(h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{bar_representation, finite_horizon_solve, steady_solve};
    use nalgebra::dmatrix;

    fn sensor_model(p: f64) -> MjlsModel<f64> {
        build_auxiliary_2c(
            &dmatrix![2.0],
            &dmatrix![1.0],
            &dmatrix![0.0],
            &dmatrix![1.0],
            &DMatrix::identity(2, 2),
            p,
        )
        .unwrap()
    }

    fn two_subsystems(p: [f64; 2]) -> DncsSpec<f64> {
        DncsSpec::new(
            vec![dmatrix![1.2, 0.3; 0.0, 0.8], dmatrix![1.5]],
            vec![dmatrix![1.0; 0.0], dmatrix![0.0]],
            vec![dmatrix![0.2; 1.0], dmatrix![1.0]],
            dmatrix![2.0, 0.1, 0.0; 0.1, 1.0, 0.2; 0.0, 0.2, 1.5],
            dmatrix![1.0, 0.0, 0.1; 0.0, 2.0, 0.0; 0.1, 0.0, 1.0],
            p.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn two_controller_structure() {
        let m = build_auxiliary_2c(
            &dmatrix![1.0f64, 1.0; 0.0, 1.0],
            &dmatrix![1.0; 2.0],
            &dmatrix![3.0; 4.0],
            &DMatrix::identity(2, 2),
            &dmatrix![2.0, 0.5; 0.5, 3.0],
            0.3,
        )
        .unwrap();
        assert_eq!(m.theta().row(0).clone_owned(), dmatrix![1.0, 0.0]);
        assert!((m.theta()[(1, 0)] - 0.7).abs() < 1e-15);
        assert_eq!(m.b(1).column(0).clone_owned(), dmatrix![0.0; 0.0]);
        assert_eq!(m.b(1).column(1).clone_owned(), dmatrix![3.0; 4.0]);
        assert_eq!(m.r(1), &dmatrix![1.0, 0.0; 0.0, 3.0]);
        assert_eq!(m.a(0), m.a(1));
    }

    #[test]
    fn n_controller_structure() {
        let spec = two_subsystems([0.3, 0.6]);
        let m = build_auxiliary_nc(&spec).unwrap();
        assert_eq!(m.modes(), 3);
        assert!((m.theta()[(2, 0)] - 0.4).abs() < 1e-15);
        assert_eq!(m.theta()[(2, 1)], 0.0);
        assert_eq!(m.theta()[(2, 2)], 0.6);
        let a2 = m.a(2);
        assert_eq!(a2[(2, 2)], 1.5);
        assert_eq!(a2.view((0, 0), (2, 2)).amax(), 0.0);
    }

    #[test]
    fn single_subsystem_models_coincide() {
        let (a, b10, b11) = (
            dmatrix![1.1, 0.4; -0.2, 0.9],
            dmatrix![1.0; 0.0],
            dmatrix![0.0; 1.0],
        );
        let (q, r) = (dmatrix![1.0, 0.2; 0.2, 2.0], dmatrix![1.0, 0.1; 0.1, 0.5]);
        let two = build_auxiliary_2c(&a, &b10, &b11, &q, &r, 0.4).unwrap();
        let spec = DncsSpec::two_controller(a, b10, b11, q, r, 0.4).unwrap();
        assert_eq!(build_auxiliary_nc(&spec).unwrap(), two);
    }

    #[test]
    fn recursions_agree_with_bar_form() {
        let spec = two_subsystems([0.3, 0.2]);
        let model = build_auxiliary_nc(&spec).unwrap();
        let rec = mjls_finite_recursions(&model, 6).unwrap();
        let bar = bar_representation(&spec, 6).unwrap();
        for (pt, bt) in rec.p.iter().zip(&bar) {
            for (x, y) in pt.iter().zip(bt) {
                assert!((x - y).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn two_controller_recursions_agree() {
        let model = sensor_model(0.1);
        let spec = DncsSpec::two_controller(
            dmatrix![2.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            DMatrix::identity(2, 2),
            0.1,
        )
        .unwrap();
        let rec = mjls_finite_recursions(&model, 5).unwrap();
        let fin = finite_horizon_solve(&spec, 5).unwrap();
        for t in 0..=6 {
            assert!((&rec.p[t][0] - fin.p0_seq[t].data()).amax() < 1e-10);
            assert!((&rec.p[t][1] - &fin.pn_seq[t][0]).amax() < 1e-10);
        }
    }

    #[test]
    fn single_mode_is_plain_riccati() {
        let model = MjlsModel::new(
            vec![dmatrix![0.5]],
            vec![dmatrix![1.0]],
            vec![dmatrix![1.0]],
            vec![dmatrix![1.0]],
            dmatrix![1.0],
        )
        .unwrap();
        let rec = mjls_finite_recursions(&model, 3).unwrap();
        let mut p = dmatrix![0.0];
        for t in (0..=3).rev() {
            p = omega(
                &p,
                &dmatrix![1.0],
                &dmatrix![1.0],
                &dmatrix![0.5],
                &dmatrix![1.0],
            )
            .unwrap();
            assert!((&rec.p[t][0] - &p).amax() < 1e-15);
        }
    }

    #[test]
    fn dcare_follows_the_threshold() {
        let opts = SteadyOptions::default();
        let ok = dcare_solve(&sensor_model(0.2), &opts).unwrap();
        assert!(ok.converged);
        let spec = DncsSpec::two_controller(
            dmatrix![2.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            DMatrix::identity(2, 2),
            0.2,
        )
        .unwrap();
        let st = steady_solve(&spec, &opts).unwrap();
        assert!((&ok.p[1] - &st.pn_star[0]).amax() < 1e-6 * st.pn_star[0].amax());
        assert!(!dcare_solve(&sensor_model(0.3), &opts).unwrap().converged);
    }

    #[test]
    fn dcare_decouples_under_identity_transitions() {
        let model = MjlsModel::new(
            vec![dmatrix![0.5], dmatrix![2.0]],
            vec![dmatrix![1.0], dmatrix![1.0]],
            vec![dmatrix![1.0], dmatrix![1.0]],
            vec![dmatrix![1.0], dmatrix![1.0]],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let sol = dcare_solve(&model, &SteadyOptions::default()).unwrap();
        assert!(sol.converged);
        for (m, a) in [0.5f64, 2.0].into_iter().enumerate() {
            let mut p = 0.0;
            for _ in 0..10_000 {
                p = 1.0 + a * a * p - a * a * p * p / (1.0 + p);
            }
            assert!((sol.p[m][(0, 0)] - p).abs() < 1e-8);
        }
    }

    #[test]
    fn lifted_matrix_matches_explicit_blocks() {
        let p = 0.3;
        let theta = dmatrix![1.0, 0.0; 1.0 - p, p];
        let m0 = dmatrix![0.5, 0.1; 0.0, 0.2];
        let m1 = dmatrix![1.0, 2.0; 3.0, 4.0];
        let big = lifted_matrix(&theta, &[m0.clone(), m1.clone()]).unwrap();
        let (k0, k1) = (m0.kronecker(&m0), m1.kronecker(&m1));
        assert_eq!(big.view((0, 0), (4, 4)).clone_owned(), k0);
        assert_eq!(big.view((0, 4), (4, 4)).clone_owned(), &k1 * (1.0 - p));
        assert_eq!(big.view((4, 0), (4, 4)).amax(), 0.0);
        assert_eq!(big.view((4, 4), (4, 4)).clone_owned(), &k1 * p);
    }

    #[test]
    fn ss_test_corner_cases() {
        let model = sensor_model(0.1);
        let zero_gain = vec![dmatrix![-2.0; 0.0], dmatrix![0.0; 0.0]];
        // mode 0 deadbeat, mode 1 keeps A = 2
        let t = ss_test(&model, &zero_gain).unwrap();
        assert!((t.rho - 0.4).abs() < 1e-12);
        assert!(t.schur_stable);
        assert_eq!(t.matrix_dim, 2);

        let single = MjlsModel::new(
            vec![dmatrix![2.0f64]],
            vec![dmatrix![1.0]],
            vec![dmatrix![1.0]],
            vec![dmatrix![1.0]],
            dmatrix![1.0],
        )
        .unwrap();
        let t = ss_test(&single, &[dmatrix![0.0]]).unwrap();
        assert!((t.rho - 4.0).abs() < 1e-12);
        assert!(!t.schur_stable);

        let z = MjlsModel::new(
            vec![DMatrix::zeros(2, 2); 2],
            vec![DMatrix::zeros(2, 1); 2],
            vec![DMatrix::identity(2, 2); 2],
            vec![dmatrix![1.0]; 2],
            dmatrix![0.5, 0.5; 0.5, 0.5],
        )
        .unwrap();
        let t = ss_test(&z, &[DMatrix::zeros(1, 2), DMatrix::zeros(1, 2)]).unwrap();
        assert_eq!(t.rho, 0.0);
        assert!(t.schur_stable);
    }

    #[test]
    fn converged_gains_stabilize() {
        let spec = two_subsystems([0.3, 0.2]);
        let model = build_auxiliary_nc(&spec).unwrap();
        let sol = dcare_solve(&model, &SteadyOptions::default()).unwrap();
        assert!(sol.converged);
        let t = ss_test(&model, &sol.k).unwrap();
        assert!(t.schur_stable);
        let sc = triangular_shortcut(&model, &closed_loops(&model, &sol.k).unwrap()).unwrap();
        assert!((sc.rho() - t.rho).abs() < 1e-8);
        assert_eq!(sc.schur_stable, t.schur_stable);
    }

    #[test]
    fn shortcut_values_for_sensor_system() {
        let p = 0.1;
        let spec = DncsSpec::two_controller(
            dmatrix![2.0],
            dmatrix![1.0],
            dmatrix![0.0],
            dmatrix![1.0],
            DMatrix::identity(2, 2),
            p,
        )
        .unwrap();
        let st = steady_solve(&spec, &SteadyOptions::default()).unwrap();
        let model = sensor_model(p);
        let gains = vec![st.k0_star.data().clone(), DMatrix::zeros(2, 1)];
        let sc = triangular_shortcut(&model, &closed_loops(&model, &gains).unwrap()).unwrap();
        let cl0 = 2.0 + st.k0_star.data()[(0, 0)];
        assert!((sc.radii[0] - cl0 * cl0).abs() < 1e-12);
        assert!((sc.radii[1] - p * 4.0).abs() < 1e-12);

        let none = sensor_model(0.0);
        let sc = triangular_shortcut(&none, &[dmatrix![0.0], dmatrix![5.0]]).unwrap();
        assert_eq!(sc.radii[1], 0.0);
    }

    #[test]
    fn shortcut_rejects_other_patterns() {
        let model = MjlsModel::new(
            vec![dmatrix![1.0]; 2],
            vec![dmatrix![1.0]; 2],
            vec![dmatrix![1.0]; 2],
            vec![dmatrix![1.0]; 2],
            dmatrix![0.5, 0.5; 0.5, 0.5],
        )
        .unwrap();
        assert_eq!(
            triangular_shortcut(&model, &[dmatrix![1.0], dmatrix![1.0]]),
            Err(Error::UnrecognizedPattern)
        );
    }

    #[test]
    fn sd_test_with_nilpotent_modes() {
        let nil = dmatrix![0.0, 1.0; 0.0, 0.0];
        let model = MjlsModel::new(
            vec![nil.clone(), nil],
            vec![DMatrix::zeros(2, 1); 2],
            vec![DMatrix::zeros(2, 2); 2],
            vec![dmatrix![1.0]; 2],
            dmatrix![1.0, 0.0; 0.5, 0.5],
        )
        .unwrap();
        let t = sd_test(&model, &[DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)]).unwrap();
        assert!(t.schur_stable);
        assert!(t.rho < 1e-6);
    }

    #[test]
    fn searched_injections_certify_detectability() {
        let spec = two_subsystems([0.3, 0.2]);
        let model = build_auxiliary_nc(&spec).unwrap();
        let h = find_injections(&model, 7, 2).unwrap();
        let t = sd_test(&model, &h).unwrap();
        assert!(t.schur_stable, "rho = {}", t.rho);
        let loops = injected_loops(&model, &h).unwrap();
        let sc = triangular_shortcut(&model, &loops).unwrap();
        assert_eq!(sc.schur_stable, t.schur_stable);
        assert!((sc.rho() - t.rho).abs() < 1e-8);
    }

    #[test]
    fn kron_guard() {
        let big = DMatrix::<f64>::zeros(13, 13);
        assert!(matches!(
            lifted_matrix(&dmatrix![1.0], &[big]),
            Err(Error::TooLarge { .. })
        ));
    }
}
