//! θ(f), the locally stationary covariance ϑⁿ, and the banded basis {M_k}.
//!
//! θ(f)_{j+1,j'+1} = ∫ exp(i(j−j')x) f(min{j,j'}/n, x) dx. For f in the φ^± span this is
//! evaluated in closed form: ∫ e^{ikx} cos(j'x) dx = π·1{|k| = j'}·(1 + 1{j' = 0}).

use crate::circulant::{build_mcheck_basis, MCheckBasis};
use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, SymEig};
use crate::quad::uniform_points;
use crate::report::CheckEntry;
use crate::sparse::Banded;
use crate::spectral::{enumerate, BasisIndex, SpectralDensity, TransferFunction};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

/// Safety factor applied to the eigenvalue bracket of θ(f).
pub const RHO_SAFETY: f64 = 0.9;

/// ρ with eig(θ) ⊂ [ρ, 1/ρ] on W(s,L,ρ*): 0.9·min(2πρ*, ρ*/(2π)).
pub fn rho_for(rho_star: f64) -> f64 {
    RHO_SAFETY * (2.0 * PI * rho_star).min(rho_star / (2.0 * PI))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix {
    pub n: usize,
    pub entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::Dimension { expected: n, got: entries.ncols() });
        }
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if max_asymmetry(&entries) > 1e-12 * scale {
            return Err(Error::Domain("covariance matrix is not symmetric".into()));
        }
        Ok(CovarianceMatrix { n, entries })
    }

    pub fn eig_range(&self) -> (f64, f64) {
        let e = SymEig::new(&self.entries);
        (e.min(), e.max())
    }

    pub fn eig_check(&self, rho: f64) -> Vec<CheckEntry> {
        let (lo, hi) = self.eig_range();
        vec![
            CheckEntry::le("cov.eig_lower", "eigenvalues within [rho, 1/rho]", rho, lo, 0.0),
            CheckEntry::le("cov.eig_upper", "eigenvalues within [rho, 1/rho]", hi, 1.0 / rho, 0.0),
        ]
    }

    /// 8-byte little-endian n, then row-major little-endian f64 entries.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for i in 0..self.n {
            for j in 0..self.n {
                w.write_all(&self.entries[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut h = [0u8; 8];
        r.read_exact(&mut h)?;
        let n = u64::from_le_bytes(h) as usize;
        if n > 4096 {
            return Err(Error::Domain(format!("binary header n = {n} exceeds 4096")));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut b = [0u8; 8];
        for i in 0..n {
            for j in 0..n {
                r.read_exact(&mut b)?;
                m[(i, j)] = f64::from_le_bytes(b);
            }
        }
        Self::new(m)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| crate::report::fmt17(self.entries[(i, j)])).collect();
            wr.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// θ(f) for f in the φ^± span, in closed form.
pub fn build_theta(f: &SpectralDensity, n: usize) -> Result<CovarianceMatrix> {
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let mut by_offset: BTreeMap<u32, Vec<(BasisIndex, f64)>> = BTreeMap::new();
    for (k, v) in &f.coeffs {
        if *v != 0.0 && (k.j2 as usize) < n {
            by_offset.entry(k.j2).or_default().push((*k, *v));
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for (d, terms) in &by_offset {
        let d = *d as usize;
        let xint = if d == 0 { 2.0 * PI } else { PI };
        for p in 0..n - d {
            let t = p as f64 / n as f64;
            let v: f64 = terms.iter().map(|(k, c)| c * k.norm_const() * k.time_factor(t)).sum::<f64>() * xint;
            m[(p, p + d)] = v;
            m[(p + d, p)] = v;
        }
    }
    Ok(CovarianceMatrix { n, entries: m })
}

/// θ(f) for a callable f, symmetric in x. The x-integrals ∫cos(dx) f(m/n,x) dx use the
/// periodic trapezoid rule with `nx` ≥ 2n nodes, exact for trigonometric integrands of degree < nx − n.
pub fn build_theta_fn(f: impl Fn(f64, f64) -> f64, n: usize, nx: usize) -> Result<CovarianceMatrix> {
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let nx = nx.max(2 * n);
    let xs: Vec<f64> = (0..nx).map(|i| -PI + 2.0 * PI * i as f64 / nx as f64).collect();
    let h = 2.0 * PI / nx as f64;
    let mut m = DMatrix::zeros(n, n);
    for p in 0..n {
        let t = p as f64 / n as f64;
        let g: Vec<f64> = xs.iter().map(|&x| f(t, x)).collect();
        for d in 0..n - p {
            // cos(d·x_i) via angle index to avoid drift
            let mut s = 0.0;
            for (i, gv) in g.iter().enumerate() {
                let idx = (d * i) % nx;
                s += gv * (2.0 * PI * idx as f64 / nx as f64 - PI * d as f64).cos();
            }
            let v = s * h;
            m[(p, p + d)] = v;
            m[(p + d, p)] = v;
        }
    }
    Ok(CovarianceMatrix { n, entries: m })
}

/// ϑⁿ_{s,t} = ∫ e^{ix(s−t)} A(s/n,x)·conj(A(t/n,x)) dx = 2π Σ_k c_k(s/n)·c_{k+s−t}(t/n).
pub fn build_vartheta(a: &TransferFunction, n: usize) -> Result<CovarianceMatrix> {
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let (klo, khi) = a.x_freq_range();
    if klo > khi {
        return Ok(CovarianceMatrix { n, entries: DMatrix::zeros(n, n) });
    }
    let width = (khi - klo) as usize;
    // c[s][k − klo] with time index s = 1..n
    let c: Vec<Vec<f64>> = (1..=n).map(|s| (klo..=khi).map(|k| a.c_k(k, s as f64 / n as f64)).collect()).collect();
    let mut m = DMatrix::zeros(n, n);
    for s in 0..n {
        for t in s.saturating_sub(width)..n.min(s + width + 1) {
            let shift = s as i64 - t as i64;
            let mut v = 0.0;
            for k in klo..=khi {
                let k2 = k + shift;
                if k2 < klo || k2 > khi {
                    continue;
                }
                v += c[s][(k - klo) as usize] * c[t][(k2 - klo) as usize];
            }
            m[(s, t)] = 2.0 * PI * v;
        }
    }
    let m = crate::linalg::symmetrize(&m);
    CovarianceMatrix::new(m)
}

/// The M_{0,a,b} contribution w·M_{0,a,b}, phase indexed by min(row, col).
fn add_m0(re: &mut Banded, im: &mut Banded, n: usize, a: i64, b: i64, w: Complex64) {
    let len = n - b.unsigned_abs() as usize;
    for p in 0..len {
        let v = w * Complex64::from_polar(2.0 * PI, 2.0 * PI * (a * p as i64) as f64 / len as f64);
        let (r, c) = if b >= 0 { (p, p + b as usize) } else { (p + (-b) as usize, p) };
        re.add_entry(r, c, v.re);
        im.add_entry(r, c, v.im);
    }
}

/// Unnormalized M^±_{j,j'} obtained by substituting M_{0,·,·} into the φ̃ expansion of φ^±.
pub fn raw_basis_matrix(n: usize, idx: &BasisIndex) -> Result<Banded> {
    let mut re = Banded::zeros(n);
    let mut im = Banded::zeros(n);
    for ((a, b), w) in idx.exp_expansion() {
        add_m0(&mut re, &mut im, n, a, b, w);
    }
    let worst = im.diags.values().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    if worst > crate::circulant::REAL_CAST_TOL {
        return Err(Error::Internal(format!("M for {idx:?} has imaginary part {worst:e}")));
    }
    if re.max_asymmetry() > crate::circulant::REAL_CAST_TOL {
        return Err(Error::Internal(format!("M for {idx:?} is not symmetric")));
    }
    re.mirror_upper();
    Ok(re)
}

/// Dense M_{0,a,b} (complex), for oracle tests.
pub fn m0_dense(n: usize, a: i64, b: i64) -> DMatrix<Complex64> {
    let mut re = Banded::zeros(n);
    let mut im = Banded::zeros(n);
    add_m0(&mut re, &mut im, n, a, b, Complex64::new(1.0, 0.0));
    let r = re.to_dense();
    let i = im.to_dense();
    DMatrix::from_fn(n, n, |p, q| Complex64::new(r[(p, q)], i[(p, q)]))
}

#[derive(Clone, Debug)]
pub struct BasisSystem {
    pub n: usize,
    pub kappa1: u32,
    pub kappa2: u32,
    pub indices: Vec<BasisIndex>,
    pub raw: Vec<Banded>,
    pub raw_norms: Vec<f64>,
    pub m: Vec<Banded>,
    pub mcheck: MCheckBasis,
}

impl BasisSystem {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    /// Σ c_k M_k as a dense matrix.
    pub fn combine(&self, c: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (ck, mk) in c.iter().zip(&self.m) {
            mk.add_to_dense(&mut out, *ck);
        }
        out
    }

    pub fn combine_banded(&self, c: &[f64]) -> Banded {
        let mut out = Banded::zeros(self.n);
        for (ck, mk) in c.iter().zip(&self.m) {
            out.axpy(*ck, mk);
        }
        out
    }

    /// {⟨A, M_k⟩_F}_k
    pub fn coefficients(&self, a: &DMatrix<f64>) -> Vec<f64> {
        self.m.iter().map(|mk| mk.frob_inner_dense(a)).collect()
    }

    /// Exact spectral norms (dense eigen) for n ≤ 512, else the Gershgorin upper bound.
    pub fn spectral_norms(&self) -> Vec<f64> {
        self.m
            .iter()
            .map(|mk| if self.n <= 512 { crate::linalg::spectral_norm_sym(&mk.to_dense()) } else { mk.gershgorin() })
            .collect()
    }

    /// Σ_k ‖M_k‖²_sp
    pub fn sp_budget(&self) -> f64 {
        self.spectral_norms().iter().map(|s| s * s).sum()
    }

    pub fn invariant_checks(&self) -> Vec<CheckEntry> {
        let n = self.n as f64;
        let mut out = Vec::new();
        let lo = 2.0 * PI * (n - self.kappa2 as f64);
        let hi = 2.0 * PI * n;
        let nmin = self.raw_norms.iter().cloned().fold(f64::INFINITY, f64::min);
        let nmax = self.raw_norms.iter().cloned().fold(0.0, f64::max);
        out.push(CheckEntry::le("basis.raw_norm_lower", "2π(n−κ₂) ≤ ‖M_k*‖²_F", lo, nmin * nmin, 1e-8 * lo));
        out.push(CheckEntry::le("basis.raw_norm_upper", "‖M_k*‖²_F ≤ 2πn", nmax * nmax, hi, 1e-8 * hi));
        let sp = self.raw.iter().map(|m| m.gershgorin()).fold(0.0, f64::max);
        out.push(CheckEntry::le("basis.raw_sp", "‖M_k*‖_sp ≤ 2√(2π)", sp, 2.0 * (2.0 * PI).sqrt(), 1e-12));
        let mut worst = 0.0f64;
        for a in 0..self.k() {
            for b in 0..=a {
                let ip = self.m[a].frob_inner(&self.m[b]);
                worst = worst.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
            }
        }
        out.push(CheckEntry::le("basis.gram", "{M_k} Frobenius-orthonormal", worst, 1e-10, 0.0));
        out
    }
}

/// Basis {M_k} together with the companion {M̌_k}; requires κ < n/4 and κ < ⌊(n−1)/2⌋/2.
pub fn build_basis(n: usize, kappa1: u32, kappa2: u32) -> Result<BasisSystem> {
    if 4 * kappa1 as usize >= n || 4 * kappa2 as usize >= n {
        return Err(Error::Precondition(format!("κ = ({kappa1}, {kappa2}) requires κ < n/4 for n = {n}")));
    }
    let mcheck = build_mcheck_basis(n, kappa1, kappa2)?;
    let indices = enumerate(kappa1, kappa2);
    let mut raw = Vec::with_capacity(indices.len());
    let mut raw_norms = Vec::with_capacity(indices.len());
    let mut m = Vec::with_capacity(indices.len());
    for idx in &indices {
        let r = raw_basis_matrix(n, idx)?;
        let nr = r.frob_sq().sqrt();
        m.push(r.scaled(1.0 / nr));
        raw_norms.push(nr);
        raw.push(r);
    }
    Ok(BasisSystem { n, kappa1, kappa2, indices, raw, raw_norms, m, mcheck })
}

/// max_k ‖M_k − M̌_k‖_F
pub fn basis_proximity(basis: &BasisSystem) -> Result<f64> {
    let c = &basis.mcheck;
    if c.n != basis.n || c.kappa1 != basis.kappa1 || c.kappa2 != basis.kappa2 {
        return Err(Error::Precondition("M and M̌ built for different (n, κ₁, κ₂)".into()));
    }
    Ok(basis.m.iter().zip(&c.matrices).map(|(a, b)| a.dist_frob(b)).fold(0.0, f64::max))
}

/// Per-k distances ‖M_k − M̌_k‖_F.
pub fn basis_distances(basis: &BasisSystem) -> Vec<f64> {
    basis.m.iter().zip(&basis.mcheck.matrices).map(|(a, b)| a.dist_frob(b)).collect()
}

/// C_θ = Σ ⟨θ, M_k⟩ M_k and its coefficients α_θ.
pub fn project_cov(theta: &DMatrix<f64>, basis: &BasisSystem) -> (Vec<f64>, DMatrix<f64>) {
    let alpha = basis.coefficients(theta);
    let c = basis.combine(&alpha);
    (alpha, c)
}

#[derive(Clone, Debug)]
pub struct Presmoothing {
    pub frob_err: f64,
    pub rel_err: f64,
    pub alpha: Vec<f64>,
}

/// frobErr = ‖θ(f) − Σ⟨f,φ_k⟩M_k*‖_F and relErr = ‖θ^{−1/2}(θ − C_θ)θ^{−1/2}‖_F.
pub fn presmoothing_residual(f: &SpectralDensity, n: usize, basis: &BasisSystem) -> Result<Presmoothing> {
    if basis.n != n {
        return Err(Error::Dimension { expected: n, got: basis.n });
    }
    let theta = build_theta(f, n)?.entries;
    let mut s = theta.clone();
    for (idx, r) in basis.indices.iter().zip(&basis.raw) {
        r.add_to_dense(&mut s, -f.coeff(idx));
    }
    let frob_err = s.norm();
    let (alpha, c) = project_cov(&theta, basis);
    let e = SymEig::new(&theta);
    let is = e.inv_sqrt()?;
    let rel_err = (&is * (&theta - c) * &is).norm();
    Ok(Presmoothing { frob_err, rel_err, alpha })
}

/// Measured ‖θ(φ_k) − M_k*‖²_F (max over k) against 32π³κ₁²κ₂²/n.
pub fn theta_basis_residual(basis: &BasisSystem, class: crate::spectral::ClassParams) -> Result<(f64, f64)> {
    let mut worst = 0.0f64;
    for (idx, r) in basis.indices.iter().zip(&basis.raw) {
        let phi = SpectralDensity::new(class).with(*idx, 1.0);
        let mut t = build_theta(&phi, basis.n)?.entries;
        r.add_to_dense(&mut t, -1.0);
        worst = worst.max(t.norm_squared());
    }
    let bound = 32.0 * PI.powi(3) * (basis.kappa1 as f64).powi(2) * (basis.kappa2 as f64).powi(2) / basis.n as f64;
    Ok((worst, bound))
}

/// Bounds for ‖θ(f) − θ(g)‖²_F: the sup-norm form 12π²n‖h‖²_∞ and the L₂ form
/// 6πn(‖h‖²_{L₂} + 4πC₁‖h‖_∞/n) with C₁ = Σ|h_k|·2πj·‖φ_k‖_∞ ≥ ‖∂_t h‖_∞.
pub fn theta_lipschitz_check(f: &SpectralDensity, g: &SpectralDensity, n: usize) -> Result<Vec<CheckEntry>> {
    let h = f.add(&g.scale(-1.0));
    let lhs = build_theta(&h, n)?.entries.norm_squared();
    let sup = h.sup_abs(401);
    let l2 = h.l2_norm_sq();
    let c1: f64 = h.coeffs.iter().map(|(k, v)| v.abs() * 2.0 * PI * k.j as f64 * k.norm_const()).sum();
    let nf = n as f64;
    let rhs_sup = 12.0 * PI * PI * nf * sup * sup;
    let rhs_l2 = 6.0 * PI * nf * (l2 + 4.0 * PI * c1 * sup / nf);
    let tol = 1e-10 * lhs.max(1e-300);
    Ok(vec![
        CheckEntry::le("basis_cov.theta_lipschitz_sup", "‖θ(f)−θ(f̃)‖²_F ≤ 12π²·n·‖f−f̃‖²_∞", lhs, rhs_sup, tol),
        CheckEntry::le("basis_cov.theta_lipschitz_l2", "‖θ(f)−θ(f̃)‖²_F ≤ 6πn(‖f−f̃‖²_L2 + 4πC₁‖f−f̃‖_∞/n)", lhs, rhs_l2, tol),
    ])
}

/// Sup over a uniform grid of |f|, used where a bound needs ‖·‖_∞.
pub fn grid_sup(f: &SpectralDensity, m: usize) -> f64 {
    let v = f.values_on(&uniform_points(m, 0.0, 1.0), &uniform_points(m, -PI, PI));
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre_on;
    use crate::spectral::ClassParams;

    fn class() -> ClassParams {
        ClassParams::new(11.0, 5.0, 0.5).unwrap()
    }

    #[test]
    fn theta_examples() {
        let n = 16;
        let one = build_theta(&SpectralDensity::constant(class(), 1.0), n).unwrap();
        assert!((one.entries.clone() - DMatrix::identity(n, n) * (2.0 * PI)).norm() < 1e-12);
        let f = SpectralDensity::new(class()).with(BasisIndex::plus(0, 1), 1.0);
        let t = build_theta(&f, n).unwrap().entries;
        for a in 0..n {
            for b in 0..n {
                let want = if a.abs_diff(b) == 1 { PI.sqrt() } else { 0.0 };
                assert!((t[(a, b)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn theta_matches_quadrature_oracle() {
        let n = 12;
        let idx = BasisIndex::plus(1, 1);
        let f = SpectralDensity::new(class()).with(idx, 1.0);
        let t = build_theta(&f, n).unwrap().entries;
        let (xs, ws) = gauss_legendre_on(64, -PI, PI);
        for a in 0..n {
            for b in 0..n {
                let m = a.min(b) as f64 / n as f64;
                let d = a as f64 - b as f64;
                let q: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (d * x).cos() * idx.eval(m, *x)).sum();
                assert!((t[(a, b)] - q).abs() < 1e-10);
                let closed = if a.abs_diff(b) == 1 { (2.0 / PI).sqrt() * PI * (2.0 * PI * m).cos() } else { 0.0 };
                assert!((t[(a, b)] - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn theta_callable_matches_closed_form() {
        let f = SpectralDensity::constant(class(), 1.0)
            .with(BasisIndex::plus(1, 2), 0.2)
            .with(BasisIndex::minus(2, 1), -0.1);
        let a = build_theta(&f, 24).unwrap().entries;
        let b = build_theta_fn(|t, x| f.eval_unchecked(t, x), 24, 64).unwrap().entries;
        assert!((a - b).norm() < 1e-11);
    }

    #[test]
    fn vartheta_examples() {
        let one = TransferFunction::new([((0, 0), Complex64::new(1.0, 0.0))]).unwrap();
        let v = build_vartheta(&one, 10).unwrap().entries;
        assert!((v - DMatrix::identity(10, 10) * (2.0 * PI)).norm() < 1e-12);
        // stationary: Toeplitz with symbol |A|², here |1 + 0.4e^{ix}|² = 1.16 + 0.8cos x
        let st = TransferFunction::new([((0, 0), Complex64::new(1.0, 0.0)), ((0, 1), Complex64::new(0.4, 0.0))]).unwrap();
        let v = build_vartheta(&st, 10).unwrap().entries;
        for a in 0..10usize {
            for b in 0..10 {
                let want = match a.abs_diff(b) {
                    0 => 2.0 * PI * 1.16,
                    1 => 2.0 * PI * 0.4,
                    _ => 0.0,
                };
                assert!((v[(a, b)] - want).abs() < 1e-12);
            }
        }
        let bad = TransferFunction::new([((2, 1), Complex64::new(0.0, 1.0))]);
        assert!(bad.is_err());
    }

    #[test]
    fn vartheta_approaches_theta() {
        let a = TransferFunction::new([
            ((0, 0), Complex64::new(1.0, 0.0)),
            ((0, 1), Complex64::new(0.3, 0.0)),
            ((1, 0), Complex64::new(0.1, 0.05)),
            ((-1, 0), Complex64::new(0.1, -0.05)),
            ((1, 1), Complex64::new(0.05, 0.0)),
            ((-1, 1), Complex64::new(0.05, 0.0)),
        ])
        .unwrap();
        let f = a.density(class()).unwrap();
        let mut last = f64::INFINITY;
        for n in [64, 128, 256] {
            let d = (build_vartheta(&a, n).unwrap().entries - build_theta(&f, n).unwrap().entries).norm();
            assert!(d < last, "n={n}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn basis_identity_element() {
        let b = build_basis(32, 2, 2).unwrap();
        let m0 = b.m[0].to_dense();
        assert!((m0 - DMatrix::identity(32, 32) / (32f64).sqrt()).norm() < 1e-14);
        assert!((b.raw_norms[0].powi(2) - 2.0 * PI * 32.0).abs() < 1e-10);
    }

    #[test]
    fn basis_norms_and_gram() {
        for n in [64usize, 256] {
            let b = build_basis(n, 3, 3).unwrap();
            for (idx, nr) in b.indices.iter().zip(&b.raw_norms) {
                let want = 2.0 * PI * (n as f64 - idx.j2 as f64);
                assert!((nr * nr - want).abs() < 1e-9 * want, "{idx:?}");
            }
            for c in b.invariant_checks() {
                assert!(c.pass, "{c:?}");
            }
        }
    }

    #[test]
    fn m0_orthogonality() {
        let n = 20;
        let idx: Vec<(i64, i64)> = (-2..=2).flat_map(|j| (-2..=2).map(move |k| (j, k))).collect();
        let mats: Vec<_> = idx.iter().map(|&(a, b)| m0_dense(n, a, b)).collect();
        for p in 0..idx.len() {
            for q in 0..idx.len() {
                let ip: Complex64 = mats[p].iter().zip(mats[q].iter()).map(|(x, y)| x * y.conj()).sum();
                let want = if p == q { 4.0 * PI * PI * (n as f64 - idx[q].1.abs() as f64) } else { 0.0 };
                assert!((ip - want).norm() < 1e-9, "{:?} {:?}", idx[p], idx[q]);
            }
        }
    }

    #[test]
    fn proximity_identity_and_scaling() {
        let b = build_basis(256, 3, 3).unwrap();
        let d = basis_distances(&b);
        assert!(d[0] < 1e-14);
        let d256 = basis_proximity(&b).unwrap();
        let d1024 = basis_proximity(&build_basis(1024, 3, 3).unwrap()).unwrap();
        let r = d1024 / d256;
        assert!((0.4..0.6).contains(&r), "ratio {r}");
    }

    #[test]
    fn presmoothing_constant_density() {
        let b = build_basis(64, 1, 1).unwrap();
        let p = presmoothing_residual(&SpectralDensity::constant(class(), 1.0), 64, &b).unwrap();
        assert!(p.frob_err < 1e-12 && p.rel_err < 1e-12);
    }

    #[test]
    fn basis_residual_within_bound() {
        let b = build_basis(128, 2, 2).unwrap();
        let (worst, bound) = theta_basis_residual(&b, class()).unwrap();
        assert!(worst <= bound, "{worst} {bound}");
    }

    #[test]
    fn lipschitz_trivial_and_random() {
        let f = SpectralDensity::constant(class(), 1.0).with(BasisIndex::plus(1, 0), 0.3);
        for c in theta_lipschitz_check(&f, &f, 64).unwrap() {
            assert!(c.pass && c.lhs == 0.0);
        }
        let g = SpectralDensity::constant(class(), 1.1).with(BasisIndex::minus(1, 1), 0.05);
        for c in theta_lipschitz_check(&f, &g, 256).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn binary_roundtrip() {
        let c = build_theta(&SpectralDensity::constant(class(), 1.0).with(BasisIndex::plus(1, 1), 0.2), 7).unwrap();
        let mut buf = Vec::new();
        c.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 49 * 8);
        assert_eq!(&buf[..8], &7u64.to_le_bytes());
        let back = CovarianceMatrix::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
