//! Block-partitioned dense matrices and the linear-algebra primitives the
//! solvers share.
//!
//! Block indices are 0-based throughout the crate: block `(i, j)` of a
//! matrix partitioned by `rows`/`cols` spans rows `rows.range(i)` and
//! columns `cols.range(j)`.

use std::ops::Range;

use nalgebra::{Complex, DMatrix, DMatrixView, Schur, SymmetricEigen};

use crate::{Error, Result, Scalar};

/// Default absolute tolerance for symmetry and semidefiniteness checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Deflation tolerance handed to the QR iteration when callers have no
/// preference. Clamped to machine epsilon for narrow types.
pub const DEFAULT_EIG_TOL: f64 = 1e-14;

/// Block sizes along one axis (subsystem state or input dimensions).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Partition("no blocks".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Partition(format!("block {i} has zero size")));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &d in &dims {
            acc += d;
            offsets.push(acc);
        }
        Ok(Partition { dims, offsets })
    }

    /// A single block covering `size` rows or columns.
    pub fn single(size: usize) -> Result<Self> {
        Self::new(vec![size])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn size(&self, i: usize) -> usize {
        self.dims[i]
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

/// Dense matrix together with a block partition of its rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix<T: Scalar> {
    data: DMatrix<T>,
    rows: Partition,
    cols: Partition,
}

impl<T: Scalar> BlockMatrix<T> {
    pub fn new(data: DMatrix<T>, rows: Partition, cols: Partition) -> Result<Self> {
        if data.nrows() != rows.total() {
            return Err(Error::dim("block matrix rows", rows.total(), data.nrows()));
        }
        if data.ncols() != cols.total() {
            return Err(Error::dim(
                "block matrix columns",
                cols.total(),
                data.ncols(),
            ));
        }
        Ok(BlockMatrix { data, rows, cols })
    }

    pub fn zeros(rows: Partition, cols: Partition) -> Self {
        let data = DMatrix::zeros(rows.total(), cols.total());
        BlockMatrix { data, rows, cols }
    }

    /// Square matrix with the same partition on both axes.
    pub fn square(data: DMatrix<T>, part: Partition) -> Result<Self> {
        Self::new(data, part.clone(), part)
    }

    /// Assembles a matrix from a full grid of blocks, given row-major.
    pub fn from_blocks(rows: Partition, cols: Partition, blocks: &[DMatrix<T>]) -> Result<Self> {
        if blocks.len() != rows.len() * cols.len() {
            return Err(Error::dim(
                "block grid",
                rows.len() * cols.len(),
                blocks.len(),
            ));
        }
        let mut out = Self::zeros(rows, cols);
        for i in 0..out.rows.len() {
            for j in 0..out.cols.len() {
                out.set_block(i, j, &blocks[i * out.cols.len() + j])?;
            }
        }
        Ok(out)
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.data
    }

    pub fn row_partition(&self) -> &Partition {
        &self.rows
    }

    pub fn col_partition(&self) -> &Partition {
        &self.cols
    }

    pub fn block_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn block_cols(&self) -> usize {
        self.cols.len()
    }

    fn check_index(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.rows.len() || j >= self.cols.len() {
            return Err(Error::BlockIndex {
                row: i,
                col: j,
                rows: self.rows.len(),
                cols: self.cols.len(),
            });
        }
        Ok(())
    }

    /// Shape `(height, width)` of block `(i, j)`.
    pub fn block_shape(&self, i: usize, j: usize) -> (usize, usize) {
        (self.rows.size(i), self.cols.size(j))
    }

    /// View of block `(i, j)`.
    ///
    /// Panics if the index is out of range; use [`Self::try_block`] for a
    /// checked variant.
    pub fn block(&self, i: usize, j: usize) -> DMatrixView<'_, T> {
        self.data.view(
            (self.rows.offset(i), self.cols.offset(j)),
            (self.rows.size(i), self.cols.size(j)),
        )
    }

    pub fn try_block(&self, i: usize, j: usize) -> Result<DMatrixView<'_, T>> {
        self.check_index(i, j)?;
        Ok(self.block(i, j))
    }

    /// Block row `i`, all columns.
    pub fn block_row(&self, i: usize) -> DMatrixView<'_, T> {
        self.data.view(
            (self.rows.offset(i), 0),
            (self.rows.size(i), self.cols.total()),
        )
    }

    /// Block column `j`, all rows.
    pub fn block_col(&self, j: usize) -> DMatrixView<'_, T> {
        self.data.view(
            (0, self.cols.offset(j)),
            (self.rows.total(), self.cols.size(j)),
        )
    }

    pub fn set_block(&mut self, i: usize, j: usize, value: &DMatrix<T>) -> Result<()> {
        self.check_index(i, j)?;
        let shape = self.block_shape(i, j);
        if value.shape() != shape {
            return Err(Error::dim(
                format!("block ({i}, {j})"),
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", value.nrows(), value.ncols()),
            ));
        }
        let (r0, c0) = (self.rows.offset(i), self.cols.offset(j));
        self.data.view_mut((r0, c0), shape).copy_from(value);
        Ok(())
    }

    /// Same partition, different data.
    pub fn with_data(&self, data: DMatrix<T>) -> Result<Self> {
        Self::new(data, self.rows.clone(), self.cols.clone())
    }
}

pub(crate) fn check_finite<T: Scalar>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_square<T: Scalar>(m: &DMatrix<T>) -> Result<usize> {
    if m.is_square() {
        Ok(m.nrows())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// All eigenvalues of a real square matrix, complex pairs included.
///
/// Uses a real Schur decomposition (Hessenberg reduction followed by the
/// implicit double-shift QR iteration). `tol` is the relative deflation
/// threshold of the iteration.
pub fn eigenvalues<T: Scalar>(m: &DMatrix<T>, tol: T) -> Result<Vec<Complex<T>>> {
    let n = check_square(m)?;
    check_finite(m, "eigenvalue input")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let eps = if tol < T::default_epsilon() {
        T::default_epsilon()
    } else {
        tol
    };
    let schur =
        Schur::try_new(m.clone(), eps, 1000 * n.max(10)).ok_or(Error::EigenNoConvergence(n))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>, tol: T) -> Result<T> {
    let eigs = eigenvalues(m, tol)?;
    Ok(eigs
        .iter()
        .map(modulus)
        .fold(T::zero(), |acc, r| if r > acc { r } else { acc }))
}

/// `|z|` of a complex eigenvalue.
pub fn modulus<T: Scalar>(z: &Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Kronecker product `A ⊗ B`.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_finite(a, "kron lhs")?;
    check_finite(b, "kron rhs")?;
    Ok(a.kronecker(b))
}

/// Outcome of comparing two symmetric matrices in the Loewner order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdOrdering {
    /// `A ⪯ B`: `B - A` is PSD.
    Below,
    /// `A ⪰ B`: `A - B` is PSD.
    Above,
    Equal,
    Incomparable,
}

/// Classifies `A` against `B` from the eigenvalues of `B - A`.
pub fn psd_order<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> Result<PsdOrdering> {
    if a.shape() != b.shape() {
        return Err(Error::dim(
            "psd_order operands",
            format!("{}x{}", a.nrows(), a.ncols()),
            format!("{}x{}", b.nrows(), b.ncols()),
        ));
    }
    check_square(a)?;
    let diff = symmetrize(&(b - a));
    let eigs = sym_eigenvalues(&diff)?;
    let lo = eigs.iter().cloned().fold(T::zero(), T::min);
    let hi = eigs.iter().cloned().fold(T::zero(), T::max);
    let below = lo >= -tol;
    let above = hi <= tol;
    Ok(match (below, above) {
        (true, true) => PsdOrdering::Equal,
        (true, false) => PsdOrdering::Below,
        (false, true) => PsdOrdering::Above,
        (false, false) => PsdOrdering::Incomparable,
    })
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn is_symmetric<T: Scalar>(m: &DMatrix<T>, tol: T) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Result<Vec<T>> {
    let n = check_square(m)?;
    check_finite(m, "symmetric eigenvalue input")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let s = symmetrize(m);
    let eig = SymmetricEigen::try_new(s, T::default_epsilon(), 1000 * n.max(10))
        .ok_or(Error::EigenNoConvergence(n))?;
    let mut vals: Vec<T> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(vals)
}

pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> Result<T> {
    Ok(sym_eigenvalues(m)?.first().cloned().unwrap_or_else(T::zero))
}

pub fn is_psd<T: Scalar>(m: &DMatrix<T>, tol: T) -> bool {
    is_symmetric(m, tol) && min_eigenvalue(m).map(|e| e >= -tol).unwrap_or(false)
}

pub fn is_pd<T: Scalar>(m: &DMatrix<T>, tol: T) -> bool {
    is_symmetric(m, tol) && min_eigenvalue(m).map(|e| e > tol).unwrap_or(false)
}

/// Principal square root of a PSD matrix.
///
/// Eigenvalues in `[-clip, 0)` are treated as zero; anything more negative
/// is an error.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>, clip: T) -> Result<DMatrix<T>> {
    let n = check_square(m)?;
    check_finite(m, "square-root input")?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::try_new(symmetrize(m), T::default_epsilon(), 1000 * n.max(10))
        .ok_or(Error::EigenNoConvergence(n))?;
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -clip {
            return Err(Error::NotPsd {
                min_eig: v.as_f64(),
            });
        }
        *v = if *v > T::zero() { v.sqrt() } else { T::zero() };
    }
    let u = &eig.eigenvectors;
    Ok(symmetrize(
        &(u * DMatrix::from_diagonal(&roots) * u.transpose()),
    ))
}

/// Block-diagonal matrix with the given square or rectangular blocks.
pub fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn trace<T: Scalar>(m: &DMatrix<T>) -> T {
    m.trace()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn eps() -> f64 {
        DEFAULT_EIG_TOL
    }

    #[test]
    fn spectral_radius_identity() {
        let r = spectral_radius(&DMatrix::<f64>::identity(3, 3), eps()).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_rotation_has_complex_pair() {
        let m = dmatrix![0.0, 1.0; -1.0, 0.0];
        let eigs = eigenvalues(&m, eps()).unwrap();
        assert!(eigs
            .iter()
            .all(|z| (z.re).abs() < 1e-14 && (z.im.abs() - 1.0).abs() < 1e-14));
        assert!((spectral_radius(&m, eps()).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_diagonal() {
        let m = dmatrix![2.0, 0.0; 0.0, 0.5];
        assert!((spectral_radius(&m, eps()).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_radius_rejects_bad_input() {
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            spectral_radius(&rect, eps()),
            Err(Error::NotSquare { .. })
        ));
        let nan = dmatrix![f64::NAN, 0.0; 0.0, 1.0];
        assert!(matches!(
            spectral_radius(&nan, eps()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn spectral_radius_larger_complex_spectrum() {
        // companion matrix of (z^2 + 4)(z - 1)(z + 0.5)
        // = z^4 - 0.5 z^3 + 3.5 z^2 - 2 z - 2
        let m = dmatrix![
            0.5, -3.5, 2.0, 2.0;
            1.0, 0.0, 0.0, 0.0;
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 0.0
        ];
        let r = spectral_radius(&m, eps()).unwrap();
        assert!((r - 2.0).abs() < 1e-10, "{r}");
    }

    #[test]
    fn kron_examples() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(kron(&i2, &i2).unwrap(), DMatrix::identity(4, 4));
        assert_eq!(
            kron(&dmatrix![2.0], &i2).unwrap(),
            dmatrix![2.0, 0.0; 0.0, 2.0]
        );
        assert_eq!(
            kron(&dmatrix![1.0, 2.0; 3.0, 4.0], &dmatrix![5.0]).unwrap(),
            dmatrix![5.0, 10.0; 15.0, 20.0]
        );
    }

    #[test]
    fn psd_order_examples() {
        let z = DMatrix::<f64>::zeros(2, 2);
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(psd_order(&z, &i, 1e-9).unwrap(), PsdOrdering::Below);
        assert_eq!(psd_order(&i, &z, 1e-9).unwrap(), PsdOrdering::Above);
        assert_eq!(psd_order(&i, &i, 1e-9).unwrap(), PsdOrdering::Equal);
        let a = dmatrix![2.0, 0.0; 0.0, 0.0];
        let b = dmatrix![0.0, 0.0; 0.0, 2.0];
        assert_eq!(psd_order(&a, &b, 1e-9).unwrap(), PsdOrdering::Incomparable);
        assert!(psd_order(&a, &DMatrix::zeros(3, 3), 1e-9).is_err());
    }

    #[test]
    fn partition_rejects_zero_blocks() {
        assert!(Partition::new(vec![1, 0, 2]).is_err());
        assert!(Partition::new(vec![]).is_err());
        let p = Partition::new(vec![2, 1, 3]).unwrap();
        assert_eq!(p.total(), 6);
        assert_eq!(p.range(2), 3..6);
    }

    #[test]
    fn block_accessors() {
        let rows = Partition::new(vec![1, 2]).unwrap();
        let cols = Partition::new(vec![2, 1]).unwrap();
        let data = DMatrix::from_fn(3, 3, |i, j| (10 * i + j) as f64);
        let m = BlockMatrix::new(data, rows, cols).unwrap();
        assert_eq!(
            m.block(1, 0).clone_owned(),
            dmatrix![10.0, 11.0; 20.0, 21.0]
        );
        assert_eq!(m.block(0, 1).clone_owned(), dmatrix![2.0]);
        assert_eq!(m.block_row(0).clone_owned(), dmatrix![0.0, 1.0, 2.0]);
        assert_eq!(m.block_col(1).clone_owned(), dmatrix![2.0; 12.0; 22.0]);
        assert!(m.try_block(2, 0).is_err());
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let q = dmatrix![4.0, 2.0; 2.0, 3.0];
        let s = psd_sqrt(&q, 1e-10).unwrap();
        assert!((&s * &s - &q).norm() < 1e-12);
        assert!(psd_sqrt(&dmatrix![-1.0], 1e-10).is_err());
        assert_eq!(psd_sqrt(&dmatrix![-1e-12], 1e-10).unwrap(), dmatrix![0.0]);
    }

    #[test]
    fn works_in_single_precision() {
        let m = dmatrix![2.0f32, 1.0; 0.0, -3.0];
        let r = spectral_radius(&m, 1e-6).unwrap();
        assert!((r - 3.0).abs() < 1e-5);
    }

    fn square(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-2.0f64..2.0, n * n)
            .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
    }

    proptest! {
        #[test]
        fn kron_squares_spectral_radius(m in (1usize..5).prop_flat_map(square)) {
            let r = spectral_radius(&m, eps()).unwrap();
            let rk = spectral_radius(&kron(&m, &m).unwrap(), eps()).unwrap();
            prop_assert!((rk - r * r).abs() <= 1e-8 * (r * r).max(1e-300),
                "rho(M⊗M) = {rk}, rho(M)^2 = {}", r * r);
        }

        #[test]
        fn blocks_reassemble(
            rdims in prop::collection::vec(1usize..4, 1..4),
            cdims in prop::collection::vec(1usize..4, 1..4),
            seed in any::<u64>(),
        ) {
            let rows = Partition::new(rdims).unwrap();
            let cols = Partition::new(cdims).unwrap();
            let data = DMatrix::from_fn(rows.total(), cols.total(), |i, j| {
                ((seed.wrapping_mul(31 + i as u64).wrapping_add(j as u64 * 7919)) % 1000) as f64
            });
            let m = BlockMatrix::new(data, rows.clone(), cols.clone()).unwrap();
            let blocks: Vec<_> = (0..rows.len())
                .flat_map(|i| (0..cols.len()).map(move |j| (i, j)))
                .map(|(i, j)| m.block(i, j).clone_owned())
                .collect();
            let back = BlockMatrix::from_blocks(rows, cols, &blocks).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn psd_order_is_antisymmetric(v in prop::collection::vec(-1.0f64..1.0, 9), scale in 0.0f64..1.0) {
            let g = DMatrix::from_row_slice(3, 3, &v);
            let a = &g * g.transpose();
            let b = &a * (1.0 + scale * 1e-12);
            let ab = psd_order(&a, &b, 1e-9).unwrap();
            let ba = psd_order(&b, &a, 1e-9).unwrap();
            let a_le_b = matches!(ab, PsdOrdering::Below | PsdOrdering::Equal);
            let b_le_a = matches!(ba, PsdOrdering::Below | PsdOrdering::Equal);
            if a_le_b && b_le_a {
                prop_assert_eq!(ab, PsdOrdering::Equal);
            }
        }
    }
}
