//! Closed-form divergences between multivariate Gaussians.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Divergences {
    pub kl: f64,
    /// 1 − Bhattacharyya coefficient
    pub hellinger2: f64,
    /// √(1 − e^{−KL})
    pub tv_upper: f64,
}

fn chol(c: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(crate::linalg::symmetrize(c)).ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn bretagnolle_huber(kl: f64) -> f64 {
    (1.0 - (-kl).exp()).max(0.0).sqrt()
}

/// KL(N(m₁,C₁) ‖ N(m₂,C₂)), squared Hellinger distance and the Bretagnolle–Huber TV bound.
pub fn gaussian_divergences(m1: &DVector<f64>, c1: &DMatrix<f64>, m2: &DVector<f64>, c2: &DMatrix<f64>) -> Result<Divergences> {
    let k = m1.len();
    for len in [m2.len(), c1.nrows(), c1.ncols(), c2.nrows(), c2.ncols()] {
        if len != k {
            return Err(Error::Dimension { expected: k, got: len });
        }
    }
    let l1 = chol(c1, "first covariance")?;
    let l2 = chol(c2, "second covariance")?;
    let d = m2 - m1;
    let tr = l2.solve(c1).trace();
    let maha = d.dot(&l2.solve(&d));
    let kl = 0.5 * (tr + maha - k as f64 + log_det(&l2) - log_det(&l1));
    let avg = (c1 + c2) * 0.5;
    let la = chol(&avg, "average covariance")?;
    let log_bc = 0.25 * log_det(&l1) + 0.25 * log_det(&l2) - 0.5 * log_det(&la) - 0.125 * d.dot(&la.solve(&d));
    let kl = kl.max(0.0);
    Ok(Divergences { kl, hellinger2: (1.0 - log_bc.exp()).max(0.0), tv_upper: bretagnolle_huber(kl) })
}
