//! Riccati-type matrix operators and the block-lifting helpers.
//!
//! ```text
//! omega(P,Q,R,A,B) = Q + A'PA - A'PB (R + B'PB)^-1 B'PA
//! psi(P,R,A,B)     = -(R + B'PB)^-1 B'PA
//! phi(P,K,Q,R,A,B) = Q + K'RK + (A+BK)'P(A+BK)
//! ```
//!
//! `omega` is `phi` evaluated at the minimizing gain `psi`, and
//! `phi - omega = (K - psi)'(R + B'PB)(K - psi)`.

use nalgebra::DMatrix;

use crate::blockmat::{symmetrize, BlockMatrix};
use crate::{Error, Result, Scalar};

/// Reciprocal condition number of `R + B'PB` below which the cost is
/// treated as ill-posed.
pub const RCOND_TOL: f64 = 1e-12;

fn shape(m: &DMatrix<impl Scalar>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

fn check_dims<T: Scalar>(
    p: &DMatrix<T>,
    r: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<(usize, usize)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let m = b.ncols();
    if b.nrows() != n {
        return Err(Error::dim("B rows", n, b.nrows()));
    }
    if p.shape() != (n, n) {
        return Err(Error::dim("P", format!("{n}x{n}"), shape(p)));
    }
    if r.shape() != (m, m) {
        return Err(Error::dim("R", format!("{m}x{m}"), shape(r)));
    }
    Ok((n, m))
}

/// `a * b` with every entry summed in index order. Padding an operand with
/// zero rows or columns then leaves the other entries bit-for-bit unchanged.
fn mul<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    debug_assert_eq!(a.ncols(), b.nrows());
    DMatrix::from_fn(a.nrows(), b.ncols(), |i, j| {
        (0..a.ncols()).fold(T::zero(), |acc, k| acc + a[(i, k)] * b[(k, j)])
    })
}

/// `a' * b`, same summation order as [`mul`].
fn mul_tn<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    debug_assert_eq!(a.nrows(), b.nrows());
    DMatrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        (0..a.nrows()).fold(T::zero(), |acc, k| acc + a[(k, i)] * b[(k, j)])
    })
}

/// Lower Cholesky factor, `None` unless `s` is numerically positive definite.
fn cholesky<T: Scalar>(s: &DMatrix<T>) -> Option<DMatrix<T>> {
    let n = s.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let d = (0..j).fold(s[(j, j)], |acc, k| acc - l[(j, k)] * l[(j, k)]);
        if !(d > T::zero()) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            l[(i, j)] = (0..j).fold(s[(i, j)], |acc, k| acc - l[(i, k)] * l[(j, k)]) / d;
        }
    }
    Some(l)
}

/// Solves `L L' x = g` column by column.
fn cholesky_solve<T: Scalar>(l: &DMatrix<T>, g: &DMatrix<T>) -> DMatrix<T> {
    let n = l.nrows();
    let mut x = g.clone();
    for c in 0..g.ncols() {
        for i in 0..n {
            let v = (0..i).fold(x[(i, c)], |acc, k| acc - l[(i, k)] * x[(k, c)]);
            x[(i, c)] = v / l[(i, i)];
        }
        for i in (0..n).rev() {
            let v = (i + 1..n).fold(x[(i, c)], |acc, k| acc - l[(k, i)] * x[(k, c)]);
            x[(i, c)] = v / l[(i, i)];
        }
    }
    x
}

/// Returns `(B'PA, (R + B'PB)^-1 B'PA)`.
fn gain_terms<T: Scalar>(
    p: &DMatrix<T>,
    r: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let pb = mul(p, b);
    let s = symmetrize(&(r + mul_tn(b, &pb)));
    let l = cholesky(&s).ok_or(Error::IllPosedCost { rcond: 0.0 })?;
    let diag = l.diagonal();
    if !diag.is_empty() {
        let lo = diag.iter().cloned().fold(diag[0], T::min);
        let hi = diag.iter().cloned().fold(diag[0], T::max);
        let rcond = (lo / hi) * (lo / hi);
        if !(rcond >= T::lit(RCOND_TOL)) {
            return Err(Error::IllPosedCost {
                rcond: rcond.as_f64(),
            });
        }
    }
    let g = mul_tn(&pb, a);
    let x = cholesky_solve(&l, &g);
    Ok((g, x))
}

/// One Riccati step: `Q + A'PA - A'PB (R + B'PB)^-1 B'PA`, symmetrized.
pub fn omega<T: Scalar>(
    p: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let (n, _) = check_dims(p, r, a, b)?;
    if q.shape() != (n, n) {
        return Err(Error::dim("Q", format!("{n}x{n}"), shape(q)));
    }
    let (g, x) = gain_terms(p, r, a, b)?;
    let apa = mul_tn(a, &mul(p, a));
    Ok(symmetrize(&(q + apa - mul_tn(&g, &x))))
}

/// Minimizing gain `-(R + B'PB)^-1 B'PA`.
pub fn psi<T: Scalar>(
    p: &DMatrix<T>,
    r: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_dims(p, r, a, b)?;
    let (_, x) = gain_terms(p, r, a, b)?;
    Ok(-x)
}

/// Cost-to-go of gain `K`: `Q + K'RK + (A+BK)'P(A+BK)`, symmetrized.
pub fn phi<T: Scalar>(
    p: &DMatrix<T>,
    k: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    a: &DMatrix<T>,
    b: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let (n, m) = check_dims(p, r, a, b)?;
    if q.shape() != (n, n) {
        return Err(Error::dim("Q", format!("{n}x{n}"), shape(q)));
    }
    if k.shape() != (m, n) {
        return Err(Error::dim("K", format!("{m}x{n}"), shape(k)));
    }
    let cl = a + mul(b, k);
    Ok(symmetrize(
        &(q + mul_tn(k, &mul(r, k)) + mul_tn(&cl, &mul(p, &cl))),
    ))
}

/// Zero matrix shaped like `p` with `q` placed at block `(row, col)`.
pub fn l_zero<T: Scalar>(
    p: &BlockMatrix<T>,
    q: &DMatrix<T>,
    row: usize,
    col: usize,
) -> Result<BlockMatrix<T>> {
    let mut out = BlockMatrix::zeros(p.row_partition().clone(), p.col_partition().clone());
    out.set_block(row, col, q)?;
    Ok(out)
}

/// Block-diagonal matrix shaped like `p`: identity on every diagonal block
/// except `q` at block `(idx, idx)`.
pub fn l_iden<T: Scalar>(p: &BlockMatrix<T>, q: &DMatrix<T>, idx: usize) -> Result<BlockMatrix<T>> {
    let (rows, cols) = (p.row_partition(), p.col_partition());
    if rows != cols {
        return Err(Error::dim(
            "l_iden partition",
            format!("{:?}", rows.dims()),
            format!("{:?}", cols.dims()),
        ));
    }
    let mut out = BlockMatrix::zeros(rows.clone(), cols.clone());
    out.set_block(idx, idx, q)?;
    for i in (0..rows.len()).filter(|&i| i != idx) {
        let d = rows.size(i);
        out.set_block(i, i, &DMatrix::identity(d, d))?;
    }
    Ok(out)
}

/// `Σ_k θ_k P(k)` for a probability row `θ`.
pub fn pi_mix<T: Scalar>(p_set: &[DMatrix<T>], theta_row: &[T]) -> Result<DMatrix<T>> {
    if p_set.len() != theta_row.len() {
        return Err(Error::Probability(format!(
            "{} matrices but {} weights",
            p_set.len(),
            theta_row.len()
        )));
    }
    check_probability_row(theta_row)?;
    let first = p_set
        .first()
        .ok_or_else(|| Error::Probability("empty row".into()))?;
    let mut acc = DMatrix::zeros(first.nrows(), first.ncols());
    for (k, (pk, &w)) in p_set.iter().zip(theta_row).enumerate() {
        if pk.shape() != first.shape() {
            return Err(Error::dim(format!("P({k})"), shape(first), shape(pk)));
        }
        if w != T::zero() {
            acc += pk * w;
        }
    }
    Ok(acc)
}

pub(crate) fn check_probability_row<T: Scalar>(row: &[T]) -> Result<()> {
    let tol = T::lit(1e-12).max(T::default_epsilon() * T::lit(16.0));
    if let Some(w) = row.iter().find(|w| !(**w >= T::zero())) {
        return Err(Error::Probability(format!("negative or NaN entry {w}")));
    }
    let sum = row.iter().fold(T::zero(), |a, &b| a + b);
    if (sum - T::one()).abs() > tol {
        return Err(Error::Probability(format!("entries sum to {sum}")));
    }
    Ok(())
}
