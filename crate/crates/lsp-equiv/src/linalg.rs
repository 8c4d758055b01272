//! Dense symmetric linear algebra on top of `nalgebra`.
//!
//! Square roots and inverses go through the symmetric eigendecomposition.
//! Eigenvalues below `SINGULAR_RTOL * ||A||_sp` are a hard error, never pseudo-inverted.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub const SINGULAR_RTOL: f64 = 1e-12;

pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        if is_diagonal(a) {
            return SymEig { values: a.diagonal(), vectors: DMatrix::identity(n, n) };
        }
        let e = SymmetricEigen::new(symmetrize(a));
        SymEig { values: e.eigenvalues, vectors: e.eigenvectors }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn abs_max(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        &scaled * self.vectors.transpose()
    }

    fn check_pd(&self, what: &str) -> Result<()> {
        let scale = self.abs_max();
        let lo = self.min();
        if !(lo > SINGULAR_RTOL * scale) || scale == 0.0 {
            return Err(Error::Singular(format!(
                "{what}: smallest eigenvalue {lo:e} vs spectral norm {scale:e}"
            )));
        }
        Ok(())
    }

    pub fn inv(&self) -> Result<DMatrix<f64>> {
        self.check_pd("inverse")?;
        Ok(self.apply(|l| 1.0 / l))
    }

    pub fn sqrt(&self) -> Result<DMatrix<f64>> {
        if self.min() < -SINGULAR_RTOL * self.abs_max() {
            return Err(Error::Singular(format!("square root of indefinite matrix, min eig {:e}", self.min())));
        }
        Ok(self.apply(|l| l.max(0.0).sqrt()))
    }

    pub fn inv_sqrt(&self) -> Result<DMatrix<f64>> {
        self.check_pd("inverse square root")?;
        Ok(self.apply(|l| 1.0 / l.sqrt()))
    }

    /// Positive square root of `A²`, i.e. `|A|`.
    pub fn abs(&self) -> DMatrix<f64> {
        self.apply(f64::abs)
    }
}

pub fn is_diagonal(a: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || a[(i, j)] == 0.0))
}

/// Eigenvalues only, unordered.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    if is_diagonal(a) {
        return a.diagonal();
    }
    symmetrize(a).symmetric_eigenvalues()
}

/// A·B, skipping the cubic product when either factor is diagonal.
pub fn matmul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_square() && is_diagonal(a) {
        let mut out = b.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= a[(i, i)];
        }
        return out;
    }
    if b.is_square() && is_diagonal(b) {
        let mut out = a.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= b[(j, j)];
        }
        return out;
    }
    a * b
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn frob(a: &DMatrix<f64>) -> f64 {
    a.norm()
}

pub fn spectral_norm_sym(a: &DMatrix<f64>) -> f64 {
    SymEig::new(a).abs_max()
}

/// Largest singular value for a general square matrix.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    spectral_norm_sym(&(a.transpose() * a)).sqrt()
}

pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) = Σ_ij A_ij B_ji
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Lower Cholesky factor, with a typed error on failure.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(a))
        .map(|c| c.l())
        .ok_or_else(|| Error::Singular("Cholesky factorization failed".into()))
}

pub fn vec_norm(v: &DVector<f64>) -> f64 {
    v.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_and_inverse_roundtrip() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let e = SymEig::new(&a);
        let s = e.sqrt().unwrap();
        assert!((&s * &s - &a).norm() < 1e-12);
        let is = e.inv_sqrt().unwrap();
        assert!((&is * &a * &is - DMatrix::identity(3, 3)).norm() < 1e-12);
        assert!((e.inv().unwrap() * &a - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn singular_is_an_error() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SymEig::new(&a).inv(), Err(Error::Singular(_))));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(SymEig::new(&b).inv_sqrt().is_err());
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = DMatrix::from_fn(4, 4, |i, j| (i * 3 + j) as f64 * 0.1);
        let b = DMatrix::from_fn(4, 4, |i, j| ((i + 2 * j) % 5) as f64);
        assert!((trace_product(&a, &b) - (&a * &b).trace()).abs() < 1e-12);
    }
}
