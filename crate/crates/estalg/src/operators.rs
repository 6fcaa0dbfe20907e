//! Dense complex matrix algebra on a finite-dimensional Hilbert space.
//!
//! An [`Operator`] is an immutable d x d complex matrix with d capped at
//! [`MAX_DIM`] so that the d^2 x d^2 super-operator layer stays tractable.
//! The sign conventions fix the Pauli basis as sigma_z = diag(1, -1) with
//! the lowering operator sigma_- = |1><0| (so [sigma_z, sigma_-] = -2 sigma_-).

use ndarray::Array2;
use thiserror::Error;

use crate::linalg;
use crate::scalar::{im, re, Scalar, C};

/// Hilbert-space dimension cap; d^2 = 4096 is the largest super-operator side.
pub const MAX_DIM: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OperatorError {
    #[error("matrix must be square, got {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {dim} outside supported range 1..={max}")]
    BadDimension { dim: usize, max: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Immutable dense operator on a d-dimensional Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator<T: Scalar = f64> {
    dim: usize,
    mat: Array2<C<T>>,
}

impl<T: Scalar> Operator<T> {
    /// Validating constructor: square, finite, 1 <= d <= [`MAX_DIM`].
    pub fn new(mat: Array2<C<T>>) -> Result<Self, OperatorError> {
        let (rows, cols) = (mat.nrows(), mat.ncols());
        if rows != cols {
            return Err(OperatorError::NotSquare { rows, cols });
        }
        if rows == 0 || rows > MAX_DIM {
            return Err(OperatorError::BadDimension { dim: rows, max: MAX_DIM });
        }
        if !linalg::all_finite(&mat) {
            return Err(OperatorError::NonFinite);
        }
        Ok(Self { dim: rows, mat })
    }

    pub fn from_fn(dim: usize, f: impl FnMut((usize, usize)) -> C<T>) -> Result<Self, OperatorError> {
        Self::new(Array2::from_shape_fn((dim, dim), f))
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_| re(T::zero())).expect("zero matrix is valid")
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |(i, j)| if i == j { re(T::one()) } else { re(T::zero()) })
            .expect("identity matrix is valid")
    }

    /// Matrix unit E_ij (1 at row i, column j).
    pub fn matrix_unit(dim: usize, i: usize, j: usize) -> Self {
        assert!(i < dim && j < dim, "matrix unit index out of range");
        Self::from_fn(dim, |(r, c)| if (r, c) == (i, j) { re(T::one()) } else { re(T::zero()) })
            .expect("matrix unit is valid")
    }

    pub fn pauli_x() -> Self {
        Self::from_fn(2, |(i, j)| if i != j { re(T::one()) } else { re(T::zero()) }).unwrap()
    }

    pub fn pauli_y() -> Self {
        Self::from_fn(2, |(i, j)| match (i, j) {
            (0, 1) => -im::<T>(),
            (1, 0) => im::<T>(),
            _ => re(T::zero()),
        })
        .unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::from_fn(2, |(i, j)| match (i, j) {
            (0, 0) => re(T::one()),
            (1, 1) => -re(T::one()),
            _ => re(T::zero()),
        })
        .unwrap()
    }

    /// Lowering operator |1><0| in the sigma_z = diag(1, -1) basis.
    pub fn sigma_minus() -> Self {
        Self::from_fn(2, |(i, j)| if (i, j) == (1, 0) { re(T::one()) } else { re(T::zero()) })
            .unwrap()
    }

    /// Raising operator, adjoint of [`Operator::sigma_minus`].
    pub fn sigma_plus() -> Self {
        Self::sigma_minus().dagger()
    }

    /// Truncated oscillator annihilation operator: a|k> = sqrt(k)|k-1>.
    pub fn lowering(dim: usize) -> Self {
        Self::from_fn(dim, |(i, j)| {
            if j == i + 1 {
                re(T::cast((j as f64).sqrt()))
            } else {
                re(T::zero())
            }
        })
        .expect("lowering operator is valid")
    }

    /// Number operator diag(0, 1, ..., d-1).
    pub fn number(dim: usize) -> Self {
        Self::from_fn(dim, |(i, j)| {
            if i == j {
                re(T::cast(i as f64))
            } else {
                re(T::zero())
            }
        })
        .expect("number operator is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &Array2<C<T>> {
        &self.mat
    }

    pub fn into_mat(self) -> Array2<C<T>> {
        self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> C<T> {
        self.mat[(i, j)]
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self { dim: self.dim, mat: linalg::dagger(&self.mat) }
    }

    pub fn trace(&self) -> C<T> {
        linalg::trace(&self.mat)
    }

    pub fn fro_norm(&self) -> T {
        linalg::fro_norm(&self.mat)
    }

    pub fn scale(&self, z: C<T>) -> Self {
        Self { dim: self.dim, mat: self.mat.mapv(|w| w * z) }
    }

    pub fn scale_re(&self, x: T) -> Self {
        self.scale(re(x))
    }

    fn check_dims(&self, other: &Self) {
        assert_eq!(
            self.dim, other.dim,
            "dimension mismatch: {} vs {}",
            self.dim, other.dim
        );
    }

    /// AB - BA. Panics on dimension mismatch.
    pub fn commutator(&self, other: &Self) -> Self {
        self.check_dims(other);
        let ab = self.mat.dot(&other.mat);
        let ba = other.mat.dot(&self.mat);
        Self { dim: self.dim, mat: ab - ba }
    }

    /// AB + BA. Panics on dimension mismatch.
    pub fn anticommutator(&self, other: &Self) -> Self {
        self.check_dims(other);
        let ab = self.mat.dot(&other.mat);
        let ba = other.mat.dot(&self.mat);
        Self { dim: self.dim, mat: ab + ba }
    }

    /// Hilbert-Schmidt inner product tr(A^dag B). Panics on dimension mismatch.
    pub fn hs_inner(&self, other: &Self) -> C<T> {
        self.check_dims(other);
        let mut s = C::new(T::zero(), T::zero());
        for (a, b) in self.mat.iter().zip(other.mat.iter()) {
            s = s + a.conj() * *b;
        }
        s
    }

    /// Real part of the Hilbert-Schmidt inner product (the inner product of
    /// the real-linear span used by the Lie-closure machinery).
    pub fn re_hs_inner(&self, other: &Self) -> T {
        self.hs_inner(other).re
    }

    /// Matrix exponential.
    pub fn expm(&self) -> Result<Self, OperatorError> {
        let mat = linalg::expm(&self.mat).map_err(|e| match e {
            linalg::LinalgError::NonFinite => OperatorError::NonFinite,
            linalg::LinalgError::Singular { .. } => OperatorError::NonFinite,
        })?;
        Ok(Self { dim: self.dim, mat })
    }

    /// Self-adjointness check in operator norm: defect = ||A - A^dag||.
    pub fn hermitian_check(&self, tol: T) -> HermitianCheck<T> {
        let skew = &self.mat - &linalg::dagger(&self.mat);
        // -i (A - A^dag) is Hermitian; its spectral radius is the defect.
        let herm = skew.mapv(|z| z * C::new(T::zero(), -T::one()));
        let (vals, _) = linalg::eigh(&herm);
        let defect = vals.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        HermitianCheck { is_selfadjoint: defect <= tol, defect }
    }

    pub fn is_selfadjoint(&self, tol: T) -> bool {
        self.hermitian_check(tol).is_selfadjoint
    }

    /// Eigenvalues of a Hermitian operator, ascending.
    pub fn eigvals_hermitian(&self) -> Vec<T> {
        linalg::eigh(&self.mat).0
    }
}

/// Outcome of a self-adjointness test: defect is the operator-norm distance
/// ||A - A^dag||, zero exactly when A is self-adjoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianCheck<T: Scalar = f64> {
    pub is_selfadjoint: bool,
    pub defect: T,
}

impl<T: Scalar> std::ops::Add for &Operator<T> {
    type Output = Operator<T>;
    fn add(self, rhs: &Operator<T>) -> Operator<T> {
        self.check_dims(rhs);
        Operator { dim: self.dim, mat: &self.mat + &rhs.mat }
    }
}

impl<T: Scalar> std::ops::Sub for &Operator<T> {
    type Output = Operator<T>;
    fn sub(self, rhs: &Operator<T>) -> Operator<T> {
        self.check_dims(rhs);
        Operator { dim: self.dim, mat: &self.mat - &rhs.mat }
    }
}

impl<T: Scalar> std::ops::Neg for &Operator<T> {
    type Output = Operator<T>;
    fn neg(self) -> Operator<T> {
        Operator { dim: self.dim, mat: self.mat.mapv(|z| -z) }
    }
}

/// Matrix product.
impl<T: Scalar> std::ops::Mul for &Operator<T> {
    type Output = Operator<T>;
    fn mul(self, rhs: &Operator<T>) -> Operator<T> {
        self.check_dims(rhs);
        Operator { dim: self.dim, mat: self.mat.dot(&rhs.mat) }
    }
}
