//! Dense real linear algebra: matrices, vectors, LU solves, and the group
//! inverse of `I - P` for a stochastic matrix `P`.
//!
//! Everything here is plain row-major `f64` storage. The systems solved by
//! the chain solvers are small and dense, and LU with scaled partial
//! pivoting is accurate enough that no iterative refinement is needed.

use crate::error::{Error, Result};

/// Default relative pivot threshold for declaring singularity.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-13;

/// Dense row-major matrix of finite `f64` entries.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                write!(f, "{:>12.6} ", self.get(r, c))?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite matrix entry {bad}"
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from a slice of rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::DimensionMismatch("no rows given".into()));
        }
        let c = rows[0].len();
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        DenseMatrix::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Matrix product `self * rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                let rhs_row = rhs.row(k);
                let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn add(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "add shape mismatch"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, rhs: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "sub shape mismatch"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        let data = self.data.iter().map(|a| a * s).collect();
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        let out = (0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(v.as_slice())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        DenseVector::from_vec(out)
    }

    /// `v^T * self` for a row vector `v`; returns a row vector.
    pub fn premul_vec(&self, v: &DenseVector) -> DenseVector {
        assert_eq!(self.rows, v.len(), "premul_vec shape mismatch");
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let a = v[r];
            if a == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.row(r)) {
                *o += a * b;
            }
        }
        DenseVector::from_vec(out)
    }

    /// Outer product `u * v^T`.
    pub fn outer(u: &DenseVector, v: &DenseVector) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(u.len(), v.len());
        for r in 0..u.len() {
            for c in 0..v.len() {
                m.set(r, c, u[r] * v[c]);
            }
        }
        m
    }

    pub fn row_sums(&self) -> DenseVector {
        DenseVector::from_vec((0..self.rows).map(|r| self.row(r).iter().sum()).collect())
    }

    /// Infinity norm: maximum absolute row sum. Zero iff the matrix is zero.
    pub fn infinity_norm(&self) -> f64 {
        (0..self.rows)
            .map(|r| self.row(r).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &DenseMatrix) -> f64 {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "diff shape mismatch"
        );
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, x| m.min(*x))
    }

    /// Copies `block` into `self` with its upper-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &DenseMatrix) {
        assert!(
            r0 + block.rows <= self.rows && c0 + block.cols <= self.cols,
            "block out of range"
        );
        for r in 0..block.rows {
            for c in 0..block.cols {
                self.set(r0 + r, c0 + c, block.get(r, c));
            }
        }
    }

    /// Extracts the block with rows `rs` and columns `cs` (in the given order).
    pub fn submatrix(&self, rs: &[usize], cs: &[usize]) -> DenseMatrix {
        assert!(
            !rs.is_empty() && !cs.is_empty(),
            "empty submatrix selection"
        );
        let mut m = DenseMatrix::zeros(rs.len(), cs.len());
        for (i, &r) in rs.iter().enumerate() {
            for (j, &c) in cs.iter().enumerate() {
                m.set(i, j, self.get(r, c));
            }
        }
        m
    }

    /// Extracts the contiguous block `[r0..r1) x [c0..c1)`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> DenseMatrix {
        assert!(
            r0 < r1 && r1 <= self.rows && c0 < c1 && c1 <= self.cols,
            "block out of range"
        );
        let mut m = DenseMatrix::zeros(r1 - r0, c1 - c0);
        for r in r0..r1 {
            for c in c0..c1 {
                m.set(r - r0, c - c0, self.get(r, c));
            }
        }
        m
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&DenseMatrix]) -> DenseMatrix {
        assert!(!parts.is_empty());
        let rows = parts[0].rows;
        assert!(parts.iter().all(|p| p.rows == rows), "hstack row mismatch");
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut m = DenseMatrix::zeros(rows, cols);
        let mut c0 = 0;
        for p in parts {
            m.set_block(0, c0, p);
            c0 += p.cols;
        }
        m
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&DenseMatrix]) -> DenseMatrix {
        assert!(!parts.is_empty());
        let cols = parts[0].cols;
        assert!(parts.iter().all(|p| p.cols == cols), "vstack col mismatch");
        let rows = parts.iter().map(|p| p.rows).sum();
        let mut m = DenseMatrix::zeros(rows, cols);
        let mut r0 = 0;
        for p in parts {
            m.set_block(r0, 0, p);
            r0 += p.rows;
        }
        m
    }

    /// Checks that every row sums to one within `tol`.
    pub fn check_stochastic(&self, tol: f64) -> Result<()> {
        for r in 0..self.rows {
            let sum: f64 = self.row(r).iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic { row: r, sum });
            }
        }
        Ok(())
    }
}

/// Dense vector of finite `f64` entries.
#[derive(Clone, PartialEq)]
pub struct DenseVector {
    data: Vec<f64>,
}

impl std::fmt::Debug for DenseVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DenseVector {:?}", self.data)
    }
}

impl DenseVector {
    pub fn from_vec(data: Vec<f64>) -> Self {
        debug_assert!(
            data.iter().all(|x| x.is_finite()),
            "non-finite vector entry"
        );
        DenseVector { data }
    }

    pub fn zeros(n: usize) -> Self {
        DenseVector { data: vec![0.0; n] }
    }

    pub fn ones(n: usize) -> Self {
        DenseVector { data: vec![1.0; n] }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, rhs: &DenseVector) -> f64 {
        assert_eq!(self.len(), rhs.len(), "dot length mismatch");
        self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).sum()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn abs(&self) -> DenseVector {
        DenseVector::from_vec(self.data.iter().map(|x| x.abs()).collect())
    }

    pub fn scale(&self, s: f64) -> DenseVector {
        DenseVector::from_vec(self.data.iter().map(|x| x * s).collect())
    }

    pub fn add(&self, rhs: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), rhs.len(), "add length mismatch");
        DenseVector::from_vec(
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, rhs: &DenseVector) -> DenseVector {
        assert_eq!(self.len(), rhs.len(), "sub length mismatch");
        DenseVector::from_vec(
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, rhs: &DenseVector) -> f64 {
        assert_eq!(self.len(), rhs.len(), "diff length mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

/// LU factorization with scaled partial pivoting.
pub struct LuFactors {
    lu: DenseMatrix,
    perm: Vec<usize>,
}

impl LuFactors {
    /// Factors a square matrix. Declares singularity when the best available
    /// pivot falls below `pivot_tol` relative to its row scale.
    pub fn factor(m: &DenseMatrix, pivot_tol: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let n = m.rows();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        // Row scales from the original matrix keep the singularity test
        // meaningful for badly scaled systems.
        let scale: Vec<f64> = (0..n)
            .map(|r| {
                m.row(r)
                    .iter()
                    .fold(0.0f64, |s, x| s.max(x.abs()))
                    .max(f64::MIN_POSITIVE)
            })
            .collect();

        for k in 0..n {
            let (mut best, mut best_ratio) = (k, -1.0);
            for r in k..n {
                let ratio = lu.get(r, k).abs() / scale[perm[r]];
                if ratio > best_ratio {
                    best_ratio = ratio;
                    best = r;
                }
            }
            if best_ratio < pivot_tol {
                return Err(Error::SingularMatrix { column: k });
            }
            if best != k {
                for c in 0..n {
                    let (a, b) = (lu.get(k, c), lu.get(best, c));
                    lu.set(k, c, b);
                    lu.set(best, c, a);
                }
                perm.swap(k, best);
            }
            let pivot = lu.get(k, k);
            for r in (k + 1)..n {
                let factor = lu.get(r, k) / pivot;
                lu.set(r, k, factor);
                if factor != 0.0 {
                    for c in (k + 1)..n {
                        let v = lu.get(r, c) - factor * lu.get(k, c);
                        lu.set(r, c, v);
                    }
                }
            }
        }
        Ok(LuFactors { lu, perm })
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n, "rhs length mismatch");
        let mut y = vec![0.0; n];
        for r in 0..n {
            let mut v = b[self.perm[r]];
            for c in 0..r {
                v -= self.lu.get(r, c) * y[c];
            }
            y[r] = v;
        }
        for r in (0..n).rev() {
            let mut v = y[r];
            for c in (r + 1)..n {
                v -= self.lu.get(r, c) * y[c];
            }
            y[r] = v / self.lu.get(r, r);
        }
        y
    }

    pub fn solve_matrix(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let n = self.lu.rows();
        assert_eq!(rhs.rows(), n, "rhs row mismatch");
        let mut out = DenseMatrix::zeros(n, rhs.cols());
        let mut col = vec![0.0; n];
        for c in 0..rhs.cols() {
            for r in 0..n {
                col[r] = rhs.get(r, c);
            }
            let x = self.solve_vec(&col);
            for r in 0..n {
                out.set(r, c, x[r]);
            }
        }
        out
    }
}

/// Solves `M X = RHS` for a square `M` by LU with scaled partial pivoting.
pub fn solve_linear(m: &DenseMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    solve_linear_with_tol(m, rhs, DEFAULT_PIVOT_TOL)
}

pub fn solve_linear_with_tol(
    m: &DenseMatrix,
    rhs: &DenseMatrix,
    pivot_tol: f64,
) -> Result<DenseMatrix> {
    if m.rows() != rhs.rows() {
        return Err(Error::DimensionMismatch(format!(
            "system is {}x{} but rhs has {} rows",
            m.rows(),
            m.cols(),
            rhs.rows()
        )));
    }
    Ok(LuFactors::factor(m, pivot_tol)?.solve_matrix(rhs))
}

/// Matrix inverse via LU.
pub fn invert(m: &DenseMatrix) -> Result<DenseMatrix> {
    solve_linear(m, &DenseMatrix::identity(m.rows()))
}

/// Infinity norm of a matrix: the maximum absolute row sum.
pub fn infinity_norm(m: &DenseMatrix) -> f64 {
    m.infinity_norm()
}

/// Group inverse of `I - P` for a stochastic matrix `P` with stationary
/// vector `pi`, computed from the rank-one corrected inverse
/// `(I - P + e pi^T)^{-1} - e pi^T`.
///
/// The result `W` satisfies the three defining identities of a group inverse
/// and `pi^T W = 0`. A singular correction signals that `pi` is not the
/// stationary vector of `P`.
pub fn group_inverse(p: &DenseMatrix, pi: &DenseVector) -> Result<DenseMatrix> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "transition matrix must be square, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    if pi.len() != p.rows() {
        return Err(Error::DimensionMismatch(format!(
            "pi has length {} but P is {}x{}",
            pi.len(),
            p.rows(),
            p.cols()
        )));
    }
    let n = p.rows();
    let e = DenseVector::ones(n);
    let e_pi = DenseMatrix::outer(&e, pi);
    let corrected = DenseMatrix::identity(n).sub(p).add(&e_pi);
    let inv = invert(&corrected)?;
    Ok(inv.sub(&e_pi))
}

/// Stationary vector of a stochastic matrix: solves `pi^T P = pi^T` with the
/// last balance equation replaced by the normalization `sum(pi) = 1`.
///
/// For a strictly substochastic `P` (a truncated chain) this returns the
/// normalized near-Perron solution of the remaining equations.
pub fn stationary_vector(p: &DenseMatrix) -> Result<DenseVector> {
    if !p.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "stationary vector needs a square matrix, got {}x{}",
            p.rows(),
            p.cols()
        )));
    }
    let n = p.rows();
    if n == 1 {
        return Ok(DenseVector::ones(1));
    }
    // rows of M: (P^T - I) with the last row replaced by all ones
    let mut m = p.transpose();
    for i in 0..n {
        m.set(i, i, m.get(i, i) - 1.0);
    }
    for c in 0..n {
        m.set(n - 1, c, 1.0);
    }
    let mut rhs = vec![0.0; n];
    rhs[n - 1] = 1.0;
    let pi = LuFactors::factor(&m, DEFAULT_PIVOT_TOL)?.solve_vec(&rhs);
    Ok(DenseVector::from_vec(pi))
}
