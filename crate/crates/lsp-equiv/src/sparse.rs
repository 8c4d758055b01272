//! Real matrices stored by diagonals.
//!
//! Offset `d` holds entries (p, p+d) for d ≥ 0 and (p+|d|, p) for d < 0, indexed by p = min(row, col).
//! Every basis matrix in this crate has at most four nonzero diagonals.

use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct Banded {
    pub n: usize,
    pub diags: BTreeMap<isize, Vec<f64>>,
}

impl Banded {
    pub fn zeros(n: usize) -> Self {
        Banded { n, diags: BTreeMap::new() }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n);
        b.diags.insert(0, vec![1.0; n]);
        b
    }

    fn pos(d: isize, p: usize) -> (usize, usize) {
        if d >= 0 {
            (p, p + d as usize)
        } else {
            (p + (-d) as usize, p)
        }
    }

    pub fn add_entry(&mut self, row: usize, col: usize, v: f64) {
        let d = col as isize - row as isize;
        let len = self.n - d.unsigned_abs();
        let diag = self.diags.entry(d).or_insert_with(|| vec![0.0; len]);
        diag[row.min(col)] += v;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let d = col as isize - row as isize;
        self.diags.get(&d).map(|v| v[row.min(col)]).unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        self.add_to_dense(&mut m, 1.0);
        m
    }

    /// m += s·self
    pub fn add_to_dense(&self, m: &mut DMatrix<f64>, s: f64) {
        for (&d, v) in &self.diags {
            for (p, x) in v.iter().enumerate() {
                let (r, c) = Self::pos(d, p);
                m[(r, c)] += s * x;
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Banded {
        Banded { n: self.n, diags: self.diags.iter().map(|(d, v)| (*d, v.iter().map(|x| s * x).collect())).collect() }
    }

    pub fn axpy(&mut self, s: f64, other: &Banded) {
        for (&d, v) in &other.diags {
            let diag = self.diags.entry(d).or_insert_with(|| vec![0.0; v.len()]);
            for (a, b) in diag.iter_mut().zip(v) {
                *a += s * b;
            }
        }
    }

    pub fn frob_sq(&self) -> f64 {
        self.diags.values().flat_map(|v| v.iter()).map(|x| x * x).sum()
    }

    pub fn frob_inner(&self, other: &Banded) -> f64 {
        let mut s = 0.0;
        for (d, v) in &self.diags {
            if let Some(w) = other.diags.get(d) {
                s += v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        s
    }

    pub fn frob_inner_dense(&self, m: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for (&d, v) in &self.diags {
            for (p, x) in v.iter().enumerate() {
                let (r, c) = Self::pos(d, p);
                s += x * m[(r, c)];
            }
        }
        s
    }

    pub fn dist_frob(&self, other: &Banded) -> f64 {
        let mut s = 0.0;
        for (d, v) in &self.diags {
            match other.diags.get(d) {
                Some(w) => s += v.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
                None => s += v.iter().map(|a| a * a).sum::<f64>(),
            }
        }
        for (d, w) in &other.diags {
            if !self.diags.contains_key(d) {
                s += w.iter().map(|a| a * a).sum::<f64>();
            }
        }
        s.sqrt()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for (&d, v) in &self.diags {
            for (p, a) in v.iter().enumerate() {
                let (r, c) = Self::pos(d, p);
                y[r] += a * x[c];
            }
        }
        y
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for (&d, v) in &self.diags {
            for (p, a) in v.iter().enumerate() {
                let (r, c) = Self::pos(d, p);
                s += a * x[r] * x[c];
            }
        }
        s
    }

    /// self · X
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for (&d, v) in &self.diags {
            for (p, a) in v.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let (r, c) = Self::pos(d, p);
                for k in 0..x.ncols() {
                    y[(r, k)] += a * x[(c, k)];
                }
            }
        }
        y
    }

    /// X · self
    pub fn dense_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(x.nrows(), self.n);
        for (&d, v) in &self.diags {
            for (p, a) in v.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let (r, c) = Self::pos(d, p);
                for k in 0..x.nrows() {
                    y[(k, c)] += x[(k, r)] * a;
                }
            }
        }
        y
    }

    pub fn trace(&self) -> f64 {
        self.diags.get(&0).map(|v| v.iter().sum()).unwrap_or(0.0)
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm of a symmetric matrix.
    pub fn gershgorin(&self) -> f64 {
        let mut rows = vec![0.0; self.n];
        for (&d, v) in &self.diags {
            for (p, a) in v.iter().enumerate() {
                rows[Self::pos(d, p).0] += a.abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Overwrite every lower diagonal with its upper counterpart.
    pub fn mirror_upper(&mut self) {
        let uppers: Vec<(isize, Vec<f64>)> = self.diags.iter().filter(|(d, _)| **d > 0).map(|(d, v)| (*d, v.clone())).collect();
        self.diags.retain(|d, _| *d >= 0);
        for (d, v) in uppers {
            self.diags.insert(-d, v);
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut m = 0.0f64;
        for (&d, v) in &self.diags {
            if d > 0 {
                let w = self.diags.get(&-d);
                for (p, a) in v.iter().enumerate() {
                    let b = w.map(|w| w[p]).unwrap_or(0.0);
                    m = m.max((a - b).abs());
                }
            } else if d < 0 && !self.diags.contains_key(&-d) {
                m = m.max(v.iter().fold(0.0f64, |m, a| m.max(a.abs())));
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Banded {
        let mut b = Banded::zeros(5);
        b.add_entry(0, 2, 1.5);
        b.add_entry(2, 0, 1.5);
        b.add_entry(3, 3, -2.0);
        b.add_entry(4, 1, 0.5);
        b
    }

    #[test]
    fn dense_agreement() {
        let b = sample();
        let d = b.to_dense();
        assert_eq!(d[(0, 2)], 1.5);
        assert_eq!(d[(4, 1)], 0.5);
        assert_eq!(b.get(4, 1), 0.5);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 1.0]);
        assert!((b.matvec(&x) - &d * &x).norm() < 1e-15);
        assert!((b.quad_form(&x) - x.dot(&(&d * &x))).abs() < 1e-14);
        let m = DMatrix::from_fn(5, 5, |i, j| (i * 7 + j * 3) as f64 % 4.0);
        assert!((b.mul_dense(&m) - &d * &m).norm() < 1e-14);
        assert!((b.dense_mul(&m) - &m * &d).norm() < 1e-14);
        assert!((b.frob_inner_dense(&m) - d.dot(&m)).abs() < 1e-14);
        assert!((b.frob_sq() - d.norm_squared()).abs() < 1e-14);
        assert!((b.max_asymmetry() - 0.5).abs() < 1e-15);
        assert!((b.dist_frob(&Banded::zeros(5)) - d.norm()).abs() < 1e-14);
    }
}
