//! Small dense symmetric positive-definite kernels.
//!
//! Every matrix in this crate is at most a few dozen rows wide, so all
//! factorizations are plain dense Cholesky on `nalgebra` storage.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot threshold for Cholesky: a pivot is rejected when it is not
/// larger than `PIVOT_TOLERANCE * max|diag|`.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Largest supported dimension.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite (leading minor {minor} failed)")]
    NotPositiveDefinite { minor: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// A symmetric matrix. Symmetry is enforced on construction by averaging
/// the input with its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self, NumericsError> {
        if m.nrows() != m.ncols() {
            return Err(NumericsError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() > MAX_DIM {
            return Err(NumericsError::TooLarge(m.nrows()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self::symmetrize(m))
    }

    /// Builds from a row-major slice of `dim * dim` entries.
    pub fn from_row_slice(dim: usize, entries: &[f64]) -> Result<Self, NumericsError> {
        if entries.len() != dim * dim {
            return Err(NumericsError::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
            });
        }
        Self::new(Matrix::from_row_slice(dim, dim, entries))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Matrix::identity(dim, dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        SymMatrix(Matrix::identity(dim, dim) * scale)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Matrix::zeros(dim, dim))
    }

    /// Gram matrix `XᵀX` of the columns of `x`.
    pub fn gram(x: &Matrix) -> Self {
        Self::symmetrize(x.transpose() * x)
    }

    /// Averages `m` with its transpose; `m` must be square.
    pub(crate) fn symmetrize(m: Matrix) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> Result<Self, NumericsError> {
        check_dim(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<Self, NumericsError> {
        check_dim(self.dim(), other.dim())?;
        Ok(SymMatrix(&self.0 - &other.0))
    }

    /// Quadratic form `vᵀ M v`.
    pub fn quad_form(&self, v: &Vector) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        &self.0 * v
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn cholesky(&self) -> Result<Cholesky, NumericsError> {
        Cholesky::factor(self)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    /// Row-major copy of the entries.
    pub fn to_row_vec(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }
}

fn check_dim(expected: usize, actual: usize) -> Result<(), NumericsError> {
    if expected == actual {
        Ok(())
    } else {
        Err(NumericsError::DimensionMismatch { expected, actual })
    }
}

/// Lower-triangular Cholesky factor `L` with `M = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(m: &SymMatrix) -> Result<Self, NumericsError> {
        let n = m.dim();
        let a = m.as_matrix();
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
        let threshold = PIVOT_TOLERANCE * scale;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > threshold) || scale == 0.0 {
                return Err(NumericsError::NotPositiveDefinite { minor: j + 1 });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }

    pub fn solve_mat(&self, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col = self.solve_vec(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }

    pub fn inverse(&self) -> SymMatrix {
        let n = self.dim();
        SymMatrix::symmetrize(self.solve_mat(&Matrix::identity(n, n)))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix, NumericsError> {
    Ok(m.cholesky()?.inverse())
}

/// `(A + B C Bᵀ)⁻¹` from `A⁻¹` and `C⁻¹` via the matrix inversion lemma:
/// `A⁻¹ − A⁻¹B (C⁻¹ + BᵀA⁻¹B)⁻¹ BᵀA⁻¹`. Only a `k×k` system is factored,
/// where `k` is the column count of `b`.
pub fn inversion_lemma_lhs(
    a_inv: &SymMatrix,
    b: &Matrix,
    c_inv: &SymMatrix,
) -> Result<SymMatrix, NumericsError> {
    check_dim(a_inv.dim(), b.nrows())?;
    check_dim(c_inv.dim(), b.ncols())?;
    a_inv.cholesky()?;
    c_inv.cholesky()?;
    let ainv_b = a_inv.as_matrix() * b;
    let inner = SymMatrix::symmetrize(c_inv.as_matrix() + b.transpose() * &ainv_b);
    let chol = inner.cholesky()?;
    let correction = &ainv_b * chol.solve_mat(&ainv_b.transpose());
    Ok(SymMatrix::symmetrize(a_inv.as_matrix() - correction))
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let denom = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / denom
}

/// Largest absolute entry of `a − b`.
pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
