//! Seeded random problem generators shared by the test suites.
//!
//! Every generated plant has a centralized problem (all `pⁿ = 0`) on which
//! [`steady_solve`] converges with default options; draws that fail this
//! are discarded.

use nalgebra::DMatrix;
use rand::Rng;

use crate::riccati::{steady_solve, DncsSpec, SteadyOptions};
use crate::thresholds::{critical_probs, DEFAULT_RANK_TOL};
use crate::Result;

/// Size limits for generated specs.
#[derive(Debug, Clone, Copy)]
pub struct SpecShape {
    pub max_subsystems: usize,
    pub max_state: usize,
    pub max_input: usize,
}

impl Default for SpecShape {
    fn default() -> Self {
        Self {
            max_subsystems: 3,
            max_state: 3,
            max_input: 2,
        }
    }
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// `GGᵀ + floor·I`.
pub fn random_pd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let g = uniform_matrix(rng, n, n, 1.0);
    &g * g.transpose() + DMatrix::identity(n, n) * floor
}

/// Unreachable part with every eigenvalue modulus in `[lo, hi)`.
fn unstable_block<R: Rng>(rng: &mut R, u: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(u, u);
    let mut i = 0;
    while i < u {
        let r = rng.random_range(lo..hi);
        if i + 1 < u && rng.random_bool(0.4) {
            let th = rng.random_range(0.3..2.8f64);
            m[(i, i)] = r * th.cos();
            m[(i, i + 1)] = -r * th.sin();
            m[(i + 1, i)] = r * th.sin();
            m[(i + 1, i + 1)] = r * th.cos();
            i += 2;
        } else {
            m[(i, i)] = if rng.random_bool(0.5) { r } else { -r };
            i += 1;
        }
        if i < u {
            m[(i - 1, i)] += rng.random_range(-0.5..0.5);
        }
    }
    m
}

/// Local pair `(Aⁿⁿ, Bⁿⁿ)` in a random basis with `unreachable` modes of
/// modulus in `[1.05, 3)` that `Bⁿⁿ` cannot reach.
pub fn local_pair<R: Rng>(
    rng: &mut R,
    d: usize,
    m: usize,
    unreachable: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let u = unreachable.min(d);
    let k = d - u;
    let mut a = DMatrix::zeros(d, d);
    if k > 0 {
        a.view_mut((0, 0), (k, k))
            .copy_from(&uniform_matrix(rng, k, k, 1.5));
        if u > 0 {
            a.view_mut((0, k), (k, u))
                .copy_from(&uniform_matrix(rng, k, u, 1.0));
        }
    }
    if u > 0 {
        a.view_mut((k, k), (u, u))
            .copy_from(&unstable_block(rng, u, 1.05, 3.0));
    }
    let mut b = DMatrix::zeros(d, m);
    if k > 0 {
        b.view_mut((0, 0), (k, m))
            .copy_from(&uniform_matrix(rng, k, m, 1.0));
        for i in 0..k.min(m) {
            b[(i, i)] += if b[(i, i)] >= 0.0 { 0.5 } else { -0.5 };
        }
    }
    let t = DMatrix::identity(d, d) + uniform_matrix(rng, d, d, 0.3);
    let tinv = t
        .clone()
        .try_inverse()
        .expect("near-identity basis change is invertible");
    (&t * a * tinv, t * b)
}

/// Random spec whose local pairs each have at least one unreachable
/// unstable mode, so every threshold is finite. All `pⁿ` are `0`.
pub fn random_spec_finite_thresholds<R: Rng>(rng: &mut R, shape: SpecShape) -> DncsSpec<f64> {
    build(rng, shape, true)
}

/// Random spec with arbitrary local pairs. All `pⁿ` are drawn in `[0, 1]`.
pub fn random_spec<R: Rng>(rng: &mut R, shape: SpecShape) -> DncsSpec<f64> {
    let spec = build(rng, shape, false);
    let p = (0..spec.n_subsystems())
        .map(|_| rng.random_range(0.0..=1.0))
        .collect();
    spec.with_probs(p).expect("probabilities in range")
}

fn build<R: Rng>(rng: &mut R, shape: SpecShape, force_unreachable: bool) -> DncsSpec<f64> {
    loop {
        let spec = draw(rng, shape, force_unreachable);
        if steady_solve(&spec, &SteadyOptions::default()).is_ok_and(|s| s.converged) {
            return spec;
        }
    }
}

fn draw<R: Rng>(rng: &mut R, shape: SpecShape, force_unreachable: bool) -> DncsSpec<f64> {
    let n = rng.random_range(1..=shape.max_subsystems);
    let remote = rng.random_range(1..=shape.max_input);
    let (mut a, mut bl, mut br, mut dims, mut inputs) =
        (vec![], vec![], vec![], vec![], vec![remote]);
    for _ in 0..n {
        let d = rng.random_range(1..=shape.max_state);
        let m = rng.random_range(1..=shape.max_input);
        let u = if force_unreachable {
            rng.random_range(1..=d)
        } else {
            rng.random_range(0..=d)
        };
        let (an, bn) = local_pair(rng, d, m, u);
        a.push(an);
        bl.push(bn);
        br.push(uniform_matrix(rng, d, remote, 1.0));
        dims.push(d);
        inputs.push(m);
    }
    let nx: usize = dims.iter().sum();
    let nu: usize = inputs.iter().sum();
    let q = random_pd(rng, nx, 0.5);
    let r = random_pd(rng, nu, 0.5);
    DncsSpec::new(a, bl, br, q, r, vec![0.0; n]).expect("generated spec is valid")
}

/// Random spec with every `pⁿ` strictly below its clamped threshold.
pub fn random_feasible_spec<R: Rng>(rng: &mut R, shape: SpecShape) -> Result<DncsSpec<f64>> {
    let force = rng.random_bool(0.7);
    let spec = build(rng, shape, force);
    let rep = critical_probs(&spec, DEFAULT_RANK_TOL)?;
    let p = rep
        .effective
        .iter()
        .map(|&pc| rng.random_range(0.1..0.8) * pc)
        .collect();
    spec.with_probs(p)
}
