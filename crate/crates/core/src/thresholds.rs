//! Critical drop probabilities and the standing assumptions.
//!
//! `min_K ρ(A + BK)` equals the largest modulus among the uncontrollable
//! eigenvalues of `(A, B)`, or zero when there are none. The critical
//! probability of subsystem `n` is `1 / r²` for that radius `r`.

use std::fmt;

use nalgebra::{Complex, DMatrix, SVD};

use crate::blockmat::{check_square, eigenvalues, modulus, psd_sqrt, DEFAULT_EIG_TOL};
use crate::riccati::DncsSpec;
use crate::{Error, Result, Scalar};

/// Singular values below `DEFAULT_RANK_TOL · σ_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Relative distance under which computed eigenvalues are treated as the
/// same eigenvalue.
pub const CLUSTER_TOL: f64 = 1e-7;

/// Clip applied to slightly negative eigenvalues when taking `Q^{1/2}`.
pub const SQRT_CLIP: f64 = 1e-10;

/// Extended-real threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Threshold<T> {
    fn from_radius(r: T) -> Self {
        if r == T::zero() {
            Threshold::Infinite
        } else {
            Threshold::Finite(T::one() / (r * r))
        }
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Threshold::Finite(v) => Some(v),
            Threshold::Infinite => None,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.finite().map_or(f64::INFINITY, |v| v.as_f64())
    }

    /// `p < self`.
    pub fn admits(self, p: T) -> bool {
        self.finite().is_none_or(|v| p < v)
    }

    pub fn min(self, other: Self) -> Self {
        match (self, other) {
            (Threshold::Finite(a), Threshold::Finite(b)) => Threshold::Finite(a.min(b)),
            (Threshold::Finite(a), Threshold::Infinite)
            | (Threshold::Infinite, Threshold::Finite(a)) => Threshold::Finite(a),
            (Threshold::Infinite, Threshold::Infinite) => Threshold::Infinite,
        }
    }

    /// `min(self, 1)`.
    pub fn clamped(self) -> T {
        self.finite().map_or(T::one(), |v| v.min(T::one()))
    }
}

impl<T: Scalar> fmt::Display for Threshold<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Finite(v) => write!(f, "{v}"),
            Threshold::Infinite => f.write_str("inf"),
        }
    }
}

/// Groups computed eigenvalues lying within [`CLUSTER_TOL`] of each other.
fn cluster<T: Scalar>(eigs: &[Complex<T>]) -> Vec<(Complex<T>, usize)> {
    let tol = T::lit(CLUSTER_TOL);
    let mut groups: Vec<(Complex<T>, usize)> = Vec::new();
    for &z in eigs {
        let hit = groups.iter_mut().find(|(c, k)| {
            let centre = *c / T::from_usize(*k).unwrap();
            modulus(&(z - centre)) <= tol * modulus(&centre).max(T::one())
        });
        match hit {
            Some((sum, k)) => {
                *sum += z;
                *k += 1;
            }
            None => groups.push((z, 1)),
        }
    }
    groups
        .into_iter()
        .map(|(sum, k)| (sum / T::from_usize(k).unwrap(), k))
        .collect()
}

fn numerical_rank<T: Scalar>(m: DMatrix<Complex<T>>, rank_tol: T) -> usize {
    let sv = SVD::new(m, false, false).singular_values;
    let smax = sv.iter().cloned().fold(T::zero(), T::max);
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rank_tol * smax).count()
}

/// Eigenvalues `λ` of `A` at which `rank [A - λI | B] < dim A`.
///
/// Each failing eigenvalue is listed `dim A - rank` times, the number of
/// independent uncontrollable directions it carries.
pub fn uncontrollable_modes<T: Scalar>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    rank_tol: T,
) -> Result<Vec<Complex<T>>> {
    let n = check_square(a)?;
    if b.nrows() != n {
        return Err(Error::dim("B rows", n, b.nrows()));
    }
    let eigs = eigenvalues(a, T::lit(DEFAULT_EIG_TOL))?;
    let mut out = Vec::new();
    for (lam, _) in cluster(&eigs) {
        let mut m = DMatrix::<Complex<T>>::zeros(n, n + b.ncols());
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = Complex::new(a[(i, j)], T::zero());
            }
            m[(i, i)] -= lam;
            for j in 0..b.ncols() {
                m[(i, n + j)] = Complex::new(b[(i, j)], T::zero());
            }
        }
        let deficiency = n - numerical_rank(m, rank_tol);
        out.extend(std::iter::repeat_n(lam, deficiency));
    }
    Ok(out)
}

/// Undetectable modes of `(A, C)`: the uncontrollable modes of `(Aᵀ, Cᵀ)`.
pub fn undetectable_modes<T: Scalar>(
    a: &DMatrix<T>,
    c: &DMatrix<T>,
    rank_tol: T,
) -> Result<Vec<Complex<T>>> {
    if c.ncols() != a.ncols() {
        return Err(Error::dim("C columns", a.ncols(), c.ncols()));
    }
    uncontrollable_modes(&a.transpose(), &c.transpose(), rank_tol)
}

fn max_modulus<T: Scalar>(modes: &[Complex<T>]) -> T {
    modes.iter().map(modulus).fold(T::zero(), T::max)
}

/// `min_K ρ(A + BK)`: the largest uncontrollable mode modulus, or zero.
pub fn min_achievable_radius<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, rank_tol: T) -> Result<T> {
    Ok(max_modulus(&uncontrollable_modes(a, b, rank_tol)?))
}

/// Thresholds and assumption checks for a spec.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport<T: Scalar> {
    /// Critical probability per subsystem.
    pub p_c: Vec<Threshold<T>>,
    /// From the uncontrollable modes of `(Aⁿⁿ, Bⁿⁿ)`.
    pub p_s: Vec<Threshold<T>>,
    /// From the undetectable modes of `(Aⁿⁿ, (Qⁿⁿ)^{1/2})`.
    pub p_d: Vec<Threshold<T>>,
    /// `min(p_c, 1)`.
    pub effective: Vec<T>,
    /// `(A, Q^{1/2})` detectable.
    pub detectable: bool,
    /// `(A, B)` stabilizable.
    pub stabilizable: bool,
    /// `(Aⁿⁿ, (Qⁿⁿ)^{1/2})` detectable, per subsystem.
    pub local_detectable: Vec<bool>,
    pub uncontrollable_modes: Vec<Vec<Complex<T>>>,
    pub undetectable_modes: Vec<Vec<Complex<T>>>,
}

fn all_inside_unit_circle<T: Scalar>(modes: &[Complex<T>]) -> bool {
    modes.iter().all(|z| modulus(z) < T::one())
}

/// Critical probabilities of every subsystem.
///
/// `p_c = min(p_s, p_d)` for a subsystem whose local pair is undetectable,
/// `p_c = p_s` otherwise.
pub fn critical_probs<T: Scalar>(spec: &DncsSpec<T>, rank_tol: T) -> Result<ThresholdReport<T>> {
    let clip = T::lit(SQRT_CLIP);
    let nsub = spec.n_subsystems();
    let mut report = ThresholdReport {
        p_c: Vec::with_capacity(nsub),
        p_s: Vec::with_capacity(nsub),
        p_d: Vec::with_capacity(nsub),
        effective: Vec::with_capacity(nsub),
        detectable: false,
        stabilizable: false,
        local_detectable: Vec::with_capacity(nsub),
        uncontrollable_modes: Vec::with_capacity(nsub),
        undetectable_modes: Vec::with_capacity(nsub),
    };
    for n in 0..nsub {
        let a = spec.a_nn(n);
        let unc = uncontrollable_modes(a, spec.b_nn(n), rank_tol)?;
        let root = psd_sqrt(&spec.q_nn(n), clip)?;
        let und = undetectable_modes(a, &root, rank_tol)?;
        let p_s = Threshold::from_radius(max_modulus(&unc));
        let p_d = Threshold::from_radius(max_modulus(&und));
        let local = all_inside_unit_circle(&und);
        let p_c = if local { p_s } else { p_s.min(p_d) };
        report.p_s.push(p_s);
        report.p_d.push(p_d);
        report.p_c.push(p_c);
        report.effective.push(p_c.clamped());
        report.local_detectable.push(local);
        report.uncontrollable_modes.push(unc);
        report.undetectable_modes.push(und);
    }
    let flags = global_flags(spec, rank_tol)?;
    report.detectable = flags.0;
    report.stabilizable = flags.1;
    Ok(report)
}

/// `((A, Q^{1/2}) detectable, (A, B) stabilizable)`.
fn global_flags<T: Scalar>(spec: &DncsSpec<T>, rank_tol: T) -> Result<(bool, bool)> {
    let a = spec.a().data();
    let root = psd_sqrt(spec.q().data(), T::lit(SQRT_CLIP))?;
    let det = all_inside_unit_circle(&undetectable_modes(a, &root, rank_tol)?);
    let stab = all_inside_unit_circle(&uncontrollable_modes(a, spec.b().data(), rank_tol)?);
    Ok((det, stab))
}

/// Human-readable list of violated standing assumptions.
pub fn assumption_warnings<T: Scalar>(spec: &DncsSpec<T>, rank_tol: T) -> Result<Vec<String>> {
    let (det, stab) = global_flags(spec, rank_tol)?;
    let mut out = Vec::new();
    if !det {
        out.push("(A, Q^1/2) is not detectable".to_string());
    }
    if !stab {
        out.push("(A, B) is not stabilizable".to_string());
    }
    for n in 0..spec.n_subsystems() {
        let root = psd_sqrt(&spec.q_nn(n), T::lit(SQRT_CLIP))?;
        if !all_inside_unit_circle(&undetectable_modes(spec.a_nn(n), &root, rank_tol)?) {
            out.push(format!("local pair of subsystem {n} is not detectable"));
        }
    }
    Ok(out)
}

/// Finite optimal cost requires `pⁿ < p_cⁿ` for every subsystem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub feasible: bool,
    /// Subsystems with `pⁿ ≥ p_cⁿ`.
    pub binding: Vec<usize>,
}

pub fn feasibility_verdict<T: Scalar>(spec: &DncsSpec<T>, rank_tol: T) -> Result<Verdict> {
    let report = critical_probs(spec, rank_tol)?;
    Ok(verdict_from(spec, &report))
}

pub fn verdict_from<T: Scalar>(spec: &DncsSpec<T>, report: &ThresholdReport<T>) -> Verdict {
    let binding: Vec<usize> = (0..spec.n_subsystems())
        .filter(|&n| !report.p_c[n].admits(spec.prob(n)))
        .collect();
    Verdict {
        feasible: binding.is_empty(),
        binding,
    }
}
