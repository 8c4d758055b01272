//! Conditional characteristic function of the sufficient statistic, its Edgeworth
//! expansion, Fourier-tail bounds and a TV oracle by Fourier inversion (K ≤ 2).

use crate::basis_cov::BasisSystem;
use crate::error::{Error, Result};
use crate::gaussianize::ExperimentState;
use crate::linalg::{frob_inner, matmul, sym_eigenvalues, SymEig};
use crate::quad::gauss_legendre_on;
use crate::report::CheckEntry;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Upper bound on the number of trace words expanded by the dense Edgeworth path.
pub const TERM_BUDGET: usize = 1_000_000;

/// Target for the closed-form tail bound when picking the inversion range.
pub const TAIL_TARGET: f64 = 1e-8;

/// Standardized matrices D̃_k and the data needed for Ψₙ and Ψₙ*.
pub struct CharFnContext {
    pub n: usize,
    pub k: usize,
    pub d_tilde: Vec<DMatrix<f64>>,
    pub d_theta: DVector<f64>,
    pub gamma_theta: DMatrix<f64>,
    /// Γ_θ^{1/2}, maps t to the D̃-coordinates of D^{[t]}
    gamma_sqrt: DMatrix<f64>,
    pub mu: f64,
    /// eigenvalues of D̃_1 when K = 1
    k1_eigs: Option<Vec<f64>>,
}

/// −½log(1 − iz) − iz/2, accurate for small z.
fn log_factor(z: f64) -> C64 {
    if z.abs() < 1e-2 {
        let iz = C64::new(0.0, z);
        let mut p = iz * iz;
        let mut s = C64::new(0.0, 0.0);
        for m in 2..=9 {
            s += p / m as f64;
            p *= iz;
        }
        s * 0.5
    } else {
        -0.5 * C64::new(1.0, -z).ln() - C64::new(0.0, 0.5 * z)
    }
}

/// Ψₙ*(r·u) from the eigenvalues of D̃^{[u]}.
pub fn psi_star_on_ray(eigs: &[f64], r: f64) -> C64 {
    let s: C64 = eigs.iter().map(|l| log_factor(2.0 * r * l)).sum();
    s.exp()
}

/// |Ψₙ*(r·u)| = Π(1 + 4r²λ²)^{-1/4}.
pub fn psi_star_modulus_on_ray(eigs: &[f64], r: f64) -> f64 {
    (-0.25 * eigs.iter().map(|l| (4.0 * r * r * l * l).ln_1p()).sum::<f64>()).exp()
}

fn canonical_sign(t: &[f64]) -> bool {
    t.iter().find(|v| **v != 0.0).map(|v| *v < 0.0).unwrap_or(false)
}

impl CharFnContext {
    /// Ã_k = C_θ^{1/2}C^{-1}M_kC^{-1}C_θ^{1/2}, d_θ = {tr Ã_k}, Γ_θ = 2{⟨Ã_k, Ã_k'⟩}, D̃ = Γ_θ^{-1/2}Ã.
    pub fn new(c_theta: &DMatrix<f64>, c: &DMatrix<f64>, basis: &BasisSystem) -> Result<Self> {
        let n = basis.n;
        let k = basis.k();
        if c.nrows() != n || c_theta.nrows() != n {
            return Err(Error::Dimension { expected: n, got: c.nrows() });
        }
        let cte = SymEig::new(c_theta);
        let ce = SymEig::new(c);
        let cts = cte.sqrt().map_err(|e| Error::Singular(format!("C_θ: {e}")))?;
        let ci = ce.inv().map_err(|e| Error::Singular(format!("C: {e}")))?;
        let s = matmul(&cts, &ci);
        let st = s.transpose();
        let a: Vec<DMatrix<f64>> = basis.m.iter().map(|m| matmul(&s, &m.mul_dense(&st))).collect();
        let d_theta = DVector::from_iterator(k, a.iter().map(|x| x.trace()));
        let mut gamma_theta = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..=i {
                let v = 2.0 * frob_inner(&a[i], &a[j]);
                gamma_theta[(i, j)] = v;
                gamma_theta[(j, i)] = v;
            }
        }
        let ge = SymEig::new(&gamma_theta);
        if ge.min() <= 0.0 {
            return Err(Error::Singular("Γ_θ is not positive definite".into()));
        }
        let g = ge.inv_sqrt()?;
        let gamma_sqrt = ge.sqrt()?;
        let d_tilde: Vec<DMatrix<f64>> = (0..k)
            .map(|i| {
                let mut out = DMatrix::zeros(n, n);
                for (j, aj) in a.iter().enumerate() {
                    out += aj * g[(i, j)];
                }
                out
            })
            .collect();
        let mu = cte.max() / ce.min().powi(2) / ge.min().sqrt() * basis.sp_budget().sqrt();
        let k1_eigs = if k == 1 { Some(sym_eigenvalues(&d_tilde[0]).as_slice().to_vec()) } else { None };
        Ok(CharFnContext { n, k, d_tilde, d_theta, gamma_theta, gamma_sqrt, mu, k1_eigs })
    }

    pub fn from_state(state: &ExperimentState, basis: &BasisSystem) -> Result<Self> {
        Self::new(&state.c_theta, &state.c, basis)
    }

    fn check_dim(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.k {
            return Err(Error::Dimension { expected: self.k, got: t.len() });
        }
        Ok(())
    }

    /// D̃^{[t]} = Σ t_k D̃_k
    pub fn d_tilde_at(&self, t: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (tk, d) in t.iter().zip(&self.d_tilde) {
            if *tk != 0.0 {
                out += d * *tk;
            }
        }
        out
    }

    /// Eigenvalues of D̃^{[u]}.
    pub fn spectrum(&self, u: &[f64]) -> Vec<f64> {
        if let Some(e) = &self.k1_eigs {
            return e.iter().map(|l| l * u[0]).collect();
        }
        sym_eigenvalues(&self.d_tilde_at(u)).as_slice().to_vec()
    }

    /// Ψₙ(t) = Π_j (1 − 2iλ_{j,θ,t})^{-1/2}
    pub fn char_fn(&self, t: &[f64]) -> Result<C64> {
        self.check_dim(t)?;
        if canonical_sign(t) {
            let neg: Vec<f64> = t.iter().map(|v| -v).collect();
            return Ok(self.char_fn(&neg)?.conj());
        }
        let s = &self.gamma_sqrt * DVector::from_column_slice(t);
        let eigs = self.spectrum(s.as_slice());
        let l: C64 = eigs.iter().map(|l| -0.5 * C64::new(1.0, -2.0 * l).ln()).sum();
        Ok(l.exp())
    }

    /// Ψₙ*(t) = exp(−i⟨Γ_θ^{-1/2}t, d_θ⟩)Ψₙ(Γ_θ^{-1/2}t)
    pub fn char_fn_standardized(&self, t: &[f64]) -> Result<C64> {
        self.check_dim(t)?;
        if canonical_sign(t) {
            let neg: Vec<f64> = t.iter().map(|v| -v).collect();
            return Ok(self.char_fn_standardized(&neg)?.conj());
        }
        Ok(psi_star_on_ray(&self.spectrum(t), 1.0))
    }

    /// |Ψₙ*(t)| from the modulus formula.
    pub fn modulus_standardized(&self, t: &[f64]) -> Result<f64> {
        self.check_dim(t)?;
        Ok(psi_star_modulus_on_ray(&self.spectrum(t), 1.0))
    }

    /// max |2⟨D̃_k, D̃_k'⟩_F − δ_kk'|
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.k {
            for j in 0..=i {
                let v = 2.0 * frob_inner(&self.d_tilde[i], &self.d_tilde[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// Integrability condition μₙ^{-2} > 8K (+16 for the closed-form tail bound).
    pub fn integrable(&self) -> bool {
        self.mu.powi(-2) > 8.0 * self.k as f64
    }

    pub fn tail_condition(&self) -> bool {
        self.mu.powi(-2) > 8.0 * self.k as f64 + 16.0
    }

    /// (nπ)^{K/2}(1 + R²/n)^{−1/(16μ²)+K/2+1}/Γ(K/2)
    pub fn fourier_tail_bound(&self, r: f64) -> f64 {
        let n = self.n as f64;
        let kf = self.k as f64;
        let e = -1.0 / (16.0 * self.mu * self.mu) + kf / 2.0 + 1.0;
        (0.5 * kf * (n * PI).ln() + e * (r * r / n).ln_1p() - ln_gamma(kf / 2.0)).exp()
    }

    /// Directions used for radial quadrature: ±1 for K = 1, m angles on the half circle for K = 2.
    fn half_directions(&self, m: usize) -> Result<Vec<Vec<f64>>> {
        match self.k {
            1 => Ok(vec![vec![1.0]]),
            2 => Ok((0..m).map(|i| {
                let p = PI * i as f64 / m as f64;
                vec![p.cos(), p.sin()]
            })
            .collect()),
            _ => Err(Error::Precondition("radial quadrature implemented for K ≤ 2".into())),
        }
    }

    /// ∫_{‖t‖≥R}|Ψₙ*| by radial quadrature over dyadic shells.
    pub fn fourier_tail_numeric(&self, r: f64, n_dirs: usize) -> Result<f64> {
        let dirs = self.half_directions(n_dirs)?;
        let spectra: Vec<Vec<f64>> = dirs.par_iter().map(|u| self.spectrum(u)).collect();
        // each half-direction stands for itself and its negative
        let dir_weight = if self.k == 1 { 2.0 } else { 2.0 * PI / n_dirs as f64 };
        let total: f64 = spectra
            .par_iter()
            .map(|eigs| {
                let radial = |x: f64| if self.k == 1 { 1.0 } else { x };
                let mut acc = 0.0;
                let mut a = r;
                let mut width = r.max(1.0);
                for _ in 0..200 {
                    let (xs, ws) = gauss_legendre_on(48, a, a + width);
                    let piece: f64 = xs.iter().zip(&ws).map(|(x, w)| w * radial(*x) * psi_star_modulus_on_ray(eigs, *x)).sum();
                    acc += piece;
                    if piece <= 1e-17 * acc.max(1e-300) || (acc == 0.0 && a > 1e6) {
                        break;
                    }
                    a += width;
                    width *= 2.0;
                }
                acc
            })
            .sum();
        Ok(total * dir_weight)
    }

    /// Numeric tail against the closed-form bound; skipped when the μ condition fails.
    pub fn fourier_tail_check(&self, r: f64, n_dirs: usize) -> Result<CheckEntry> {
        let id = format!("cltcheck.fourier_tail.R{r}");
        let pref = "Fourier tail bound";
        if !self.tail_condition() {
            return Ok(CheckEntry::skipped(id, pref, format!("μₙ^-2 = {} ≤ 8K+16", self.mu.powi(-2))));
        }
        let lhs = self.fourier_tail_numeric(r, n_dirs)?;
        let rhs = self.fourier_tail_bound(r);
        Ok(CheckEntry::le(id, pref, lhs, rhs, 0.0))
    }

    /// |Ψₙ*(t)| ≤ (1 + ‖t‖²/n)^{−1/(16μ²)} at the given points.
    pub fn modulus_bound_check(&self, points: &[Vec<f64>]) -> Result<CheckEntry> {
        let mut worst = f64::NEG_INFINITY;
        for t in points {
            let m = self.modulus_standardized(t)?;
            let r2: f64 = t.iter().map(|v| v * v).sum();
            let b = (-(r2 / self.n as f64).ln_1p() / (16.0 * self.mu * self.mu)).exp();
            worst = worst.max(m - b);
        }
        Ok(CheckEntry::le("cltcheck.modulus_bound", "|Ψₙ*(t)| ≤ (1+‖t‖²/n)^{-1/(16μ²)}", worst, 0.0, 1e-15))
    }

    /// max over directions of ‖D̃^{[u]}‖_sp − μₙ (must be ≤ 0).
    pub fn spectral_bound_check(&self, dirs: &[Vec<f64>]) -> Result<CheckEntry> {
        let mut worst = 0.0f64;
        for u in dirs {
            self.check_dim(u)?;
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let sp = self.spectrum(u).iter().fold(0.0f64, |m, l| m.max(l.abs()));
            worst = worst.max(sp / norm);
        }
        Ok(CheckEntry::le("cltcheck.bound_Dt", "‖D̃^{[t]}‖_sp ≤ ‖t‖μₙ", worst, self.mu, 1e-12 * self.mu))
    }

    /// Smallest radius at which the closed-form tail bound is below `target`, or a numeric
    /// radius when the μ condition for the bound fails.
    pub fn inversion_radius(&self, target: f64) -> Result<(f64, f64)> {
        if !self.integrable() {
            return Err(Error::Precondition(format!(
                "Ψₙ* not known to be integrable: μₙ^-2 = {} ≤ 8K",
                self.mu.powi(-2)
            )));
        }
        let floor = 9.0;
        let reachable = self.tail_condition() && self.fourier_tail_bound(1e3) <= target;
        if reachable {
            let mut hi = floor;
            while self.fourier_tail_bound(hi) > target {
                hi *= 2.0;
            }
            let mut lo = floor.min(hi / 2.0);
            if self.fourier_tail_bound(lo) <= target {
                return Ok((lo, self.fourier_tail_bound(lo)));
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if self.fourier_tail_bound(mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Ok((hi, self.fourier_tail_bound(hi)));
        }
        let mut r = floor;
        loop {
            let tail = self.fourier_tail_numeric(r, 32)?;
            if tail <= target {
                return Ok((r, tail));
            }
            r *= 1.5;
            if r > 1e6 {
                return Err(Error::Precondition("numeric tail does not reach target".into()));
            }
        }
    }

    /// TV(L(T*|C), N(0, I_K)) by Fourier inversion, K ∈ {1, 2}.
    pub fn tv_oracle(&self, grid: &InversionGrid) -> Result<TvResult> {
        let (r_max, tail) = self.inversion_radius(TAIL_TARGET)?;
        let tv = match self.k {
            1 => {
                let eigs = self.k1_eigs.as_ref().expect("K = 1");
                tv_vs_std_normal_1d(&|t: f64| {
                    if t < 0.0 {
                        psi_star_on_ray(eigs, -t).conj()
                    } else {
                        psi_star_on_ray(eigs, t)
                    }
                }, r_max, grid)
            }
            2 => {
                let dirs = self.half_directions(grid.n_phi)?;
                let spectra: Vec<Vec<f64>> = dirs.par_iter().map(|u| self.spectrum(u)).collect();
                tv_vs_std_normal_2d(&|i: usize, r: f64| psi_star_on_ray(&spectra[i], r), r_max, grid)
            }
            _ => return Err(Error::Precondition("TV oracle implemented for K ≤ 2".into())),
        };
        Ok(TvResult { n: self.n, k: self.k, mu: self.mu, tv, r_max, tail_bound_used: tail })
    }

    /// Frobenius norm of the third-cumulant tensor 8·tr(D̃_aD̃_bD̃_c) of T*.
    pub fn third_cumulant_norm(&self) -> f64 {
        let k = self.k;
        let mut s = 0.0;
        for a in 0..k {
            for b in 0..k {
                let ab = &self.d_tilde[a] * &self.d_tilde[b];
                for c in 0..k {
                    let v = 8.0 * frob_inner(&ab, &self.d_tilde[c]);
                    s += v * v;
                }
            }
        }
        s.sqrt()
    }

    pub fn checks(&self) -> Vec<CheckEntry> {
        vec![CheckEntry::le(
            "cltcheck.d_tilde_orthonormal",
            "{√2·D̃_k} Frobenius-orthonormal",
            self.orthonormality_defect(),
            1e-10,
            0.0,
        )]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InversionGrid {
    /// density evaluated on [−half_width, half_width]^K
    pub half_width: f64,
    /// FFT length (K = 1)
    pub n_fft: usize,
    /// angular nodes on the half circle (K = 2)
    pub n_phi: usize,
    /// radial Gauss–Legendre nodes (K = 2)
    pub n_r: usize,
    /// x-grid points per axis (K = 2)
    pub n_x: usize,
}

impl Default for InversionGrid {
    fn default() -> Self {
        InversionGrid { half_width: 20.0, n_fft: 1 << 16, n_phi: 96, n_r: 160, n_x: 161 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TvResult {
    pub n: usize,
    pub k: usize,
    pub mu: f64,
    pub tv: f64,
    pub r_max: f64,
    pub tail_bound_used: f64,
}

/// Density by trapezoidal Fourier inversion of a characteristic function on [0, r_max],
/// evaluated on the periodic grid x_j = −W + 2Wj/N.
pub fn invert_density_1d(psi: &dyn Fn(f64) -> C64, r_max: f64, grid: &InversionGrid) -> (Vec<f64>, Vec<f64>) {
    let l = 2.0 * grid.half_width;
    let h = 2.0 * PI / l;
    let n_t = (r_max / h).ceil() as usize + 1;
    let n = grid.n_fft.max((2 * n_t).next_power_of_two());
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for (k, b) in buf.iter_mut().enumerate().take(n_t + 1) {
        let g = psi(k as f64 * h);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *b = if k == 0 { g * 0.5 } else { g * sign };
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let xs = (0..n).map(|j| -grid.half_width + l * j as f64 / n as f64).collect();
    let f = buf.iter().map(|v| h / PI * v.re).collect();
    (xs, f)
}

/// ½∫|f − φ| where f has characteristic function ψ (one dimension).
pub fn tv_vs_std_normal_1d(psi: &dyn Fn(f64) -> C64, r_max: f64, grid: &InversionGrid) -> f64 {
    let diff = |t: f64| psi(t) - C64::new((-0.5 * t * t).exp(), 0.0);
    let (xs, g) = invert_density_1d(&diff, r_max, grid);
    let dx = 2.0 * grid.half_width / xs.len() as f64;
    0.5 * g.iter().map(|v| v.abs()).sum::<f64>() * dx
}

/// Two-dimensional version on polar nodes: ψ(i, r) is the characteristic function at r·u_i
/// with u_i = (cos πi/m, sin πi/m), m = grid.n_phi.
pub fn tv_vs_std_normal_2d(psi: &(dyn Fn(usize, f64) -> C64 + Sync), r_max: f64, grid: &InversionGrid) -> f64 {
    let m = grid.n_phi;
    let (rs, wr) = gauss_legendre_on(grid.n_r, 0.0, r_max);
    // (2π)^{-2}·2Re∫_0^π∫_0^R e^{−ir u·x} g(ru) r dr dφ
    let nodes: Vec<(f64, f64, f64, C64)> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = PI * i as f64 / m as f64;
            let (c, s) = (p.cos(), p.sin());
            let rs = &rs;
            let wr = &wr;
            (0..rs.len())
                .map(move |j| {
                    let r = rs[j];
                    let g = psi(i, r) - C64::new((-0.5 * r * r).exp(), 0.0);
                    (r * c, r * s, 0.0, g * (wr[j] * r * PI / m as f64))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let w = grid.half_width;
    let nx = grid.n_x;
    let dx = 2.0 * w / (nx - 1) as f64;
    let total: f64 = (0..nx)
        .into_par_iter()
        .map(|a| {
            let x1 = -w + a as f64 * dx;
            let wa = if a == 0 || a == nx - 1 { 0.5 } else { 1.0 };
            let mut row = 0.0;
            for b in 0..nx {
                let x2 = -w + b as f64 * dx;
                let wb = if b == 0 || b == nx - 1 { 0.5 } else { 1.0 };
                let mut acc = 0.0;
                for (t1, t2, _, g) in &nodes {
                    let ph = -(t1 * x1 + t2 * x2);
                    let (s, c) = ph.sin_cos();
                    acc += g.re * c - g.im * s;
                }
                row += wb * (2.0 * acc / (4.0 * PI * PI)).abs();
            }
            wa * row
        })
        .sum();
    0.5 * total * dx * dx
}

/// TV between (χ²_ν − ν)/√(2ν) and N(0,1) from CDF differences over the sign regions.
pub fn tv_chi2_standardized(nu: usize) -> f64 {
    let nuf = nu as f64;
    let chi = ChiSquared::new(nuf).unwrap();
    let norm = Normal::new(0.0, 1.0).unwrap();
    let s = (2.0 * nuf).sqrt();
    let lower = -nuf / s;
    // statrs' chi-square pdf overflows for moderate ν, so go through the log density
    let h = 0.5 * nuf;
    let ln_pdf = |x: f64| (h - 1.0) * x.ln() - 0.5 * x - h * 2f64.ln() - ln_gamma(h);
    let f = |y: f64| if y <= lower { 0.0 } else { s * ln_pdf(nuf + s * y).exp() };
    let diff = |y: f64| f(y) - norm.pdf(y);
    let fcdf = |y: f64| if y <= lower { 0.0 } else { chi.cdf(nuf + s * y) };
    // region where the χ² density exceeds the normal one
    let mut roots = Vec::new();
    let (a, b) = (lower.max(-40.0), 40.0);
    let steps = 80_000;
    let dy = (b - a) / steps as f64;
    let mut prev = diff(a + 1e-12);
    for i in 1..=steps {
        let y = a + i as f64 * dy;
        let cur = diff(y);
        if prev.signum() != cur.signum() && prev != 0.0 {
            let (mut lo, mut hi) = (y - dy, y);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if diff(mid).signum() == diff(lo).signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = cur;
    }
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(&roots);
    edges.push(f64::INFINITY);
    let mut tv = 0.0;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = if lo.is_infinite() {
            hi - 1.0
        } else if hi.is_infinite() {
            lo + 1.0
        } else {
            0.5 * (lo + hi)
        };
        if diff(mid) > 0.0 {
            let fp = |y: f64| if y.is_infinite() { if y > 0.0 { 1.0 } else { 0.0 } } else { fcdf(y) };
            tv += (fp(hi) - fp(lo)) - (norm.cdf(hi) - norm.cdf(lo));
        }
    }
    tv
}

/// Truncated polynomial in K variables with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    pub k: usize,
    pub max_deg: usize,
    pub terms: BTreeMap<Vec<u32>, C64>,
}

impl Poly {
    pub fn zero(k: usize, max_deg: usize) -> Self {
        Poly { k, max_deg, terms: BTreeMap::new() }
    }

    pub fn one(k: usize, max_deg: usize) -> Self {
        let mut p = Self::zero(k, max_deg);
        p.terms.insert(vec![0; k], C64::new(1.0, 0.0));
        p
    }

    pub fn add_term(&mut self, m: Vec<u32>, c: C64) {
        if m.iter().sum::<u32>() as usize <= self.max_deg {
            *self.terms.entry(m).or_insert(C64::new(0.0, 0.0)) += c;
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.k, self.max_deg);
        for (ma, ca) in &self.terms {
            let da: u32 = ma.iter().sum();
            for (mb, cb) in &other.terms {
                if (da + mb.iter().sum::<u32>()) as usize > self.max_deg {
                    continue;
                }
                let m: Vec<u32> = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                out.add_term(m, ca * cb);
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Poly {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|v| *v *= s);
        out
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn eval(&self, t: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().zip(t).map(|(e, x)| x.powi(*e as i32)).product::<f64>())
            .sum()
    }
}

/// Coefficients of tr[(D̃^{[t]})^ℓ] as homogeneous forms, ℓ = 3..=q.
pub type TraceForms = BTreeMap<usize, BTreeMap<Vec<u32>, f64>>;

fn monomial_of_word(word: &[usize], k: usize) -> Vec<u32> {
    let mut m = vec![0u32; k];
    for &j in word {
        m[j] += 1;
    }
    m
}

/// Trace forms from dense products over all words j₁…j_ℓ.
pub fn trace_forms_dense(ctx: &CharFnContext, q: usize) -> Result<TraceForms> {
    let k = ctx.k;
    let words: usize = (3..=q).map(|l| k.saturating_pow(l as u32)).fold(0usize, |a, b| a.saturating_add(b));
    if words > TERM_BUDGET {
        return Err(Error::Budget(format!("{words} trace words exceed {TERM_BUDGET}; reduce K or Q")));
    }
    let mut out: TraceForms = BTreeMap::new();
    // prefixes of length ℓ−1 with their products
    let mut level: Vec<(Vec<usize>, DMatrix<f64>)> = (0..k).map(|j| (vec![j], ctx.d_tilde[j].clone())).collect();
    for l in 2..=q {
        if l >= 3 {
            let form = out.entry(l).or_default();
            for (w, p) in &level {
                for j in 0..k {
                    let mut word = w.clone();
                    word.push(j);
                    // D̃_j symmetric: tr(P D̃_j) = ⟨P, D̃_j⟩
                    *form.entry(monomial_of_word(&word, k)).or_insert(0.0) += frob_inner(p, &ctx.d_tilde[j]);
                }
            }
        }
        if l < q {
            level = level
                .iter()
                .flat_map(|(w, p)| {
                    (0..k).map(move |j| {
                        let mut word = w.clone();
                        word.push(j);
                        (word, p * &ctx.d_tilde[j])
                    })
                })
                .collect();
        }
    }
    Ok(out)
}

/// K = 1: power sums of the eigenvalues of D̃_1.
fn trace_forms_k1(ctx: &CharFnContext, q: usize) -> TraceForms {
    let eigs = ctx.k1_eigs.as_ref().expect("K = 1");
    (3..=q)
        .map(|l| {
            let p: f64 = eigs.iter().map(|v| v.powi(l as i32)).sum();
            (l, BTreeMap::from([(vec![l as u32], p)]))
        })
        .collect()
}

/// K = 2: fit each binary form Σ_a c_a t₁^a t₂^{ℓ−a} to the power sums along 2(q+1) directions.
fn trace_forms_k2(ctx: &CharFnContext, q: usize) -> Result<TraceForms> {
    let nd = 2 * (q + 1);
    let dirs: Vec<(f64, f64)> = (0..nd).map(|i| {
        let p = PI * (i as f64 + 0.5) / nd as f64;
        (p.cos(), p.sin())
    })
    .collect();
    let spectra: Vec<Vec<f64>> = dirs.par_iter().map(|(c, s)| ctx.spectrum(&[*c, *s])).collect();
    let mut out = BTreeMap::new();
    for l in 3..=q {
        let a = DMatrix::from_fn(nd, l + 1, |i, e| dirs[i].0.powi(e as i32) * dirs[i].1.powi((l - e) as i32));
        let v = DVector::from_fn(nd, |i, _| spectra[i].iter().map(|x| x.powi(l as i32)).sum::<f64>());
        let sol = a
            .svd(true, true)
            .solve(&v, 1e-14)
            .map_err(|e| Error::Internal(format!("trace form fit: {e}")))?;
        let form: BTreeMap<Vec<u32>, f64> = (0..=l).map(|e| (vec![e as u32, (l - e) as u32], sol[e])).collect();
        out.insert(l, form);
    }
    Ok(out)
}

pub fn trace_forms(ctx: &CharFnContext, q: usize) -> Result<TraceForms> {
    match ctx.k {
        1 => Ok(trace_forms_k1(ctx, q)),
        2 => trace_forms_k2(ctx, q),
        _ => trace_forms_dense(ctx, q),
    }
}

fn multinomial(m: &[u32]) -> f64 {
    let q: u32 = m.iter().sum();
    let mut ln = ln_gamma(q as f64 + 1.0);
    for &x in m {
        ln -= ln_gamma(x as f64 + 1.0);
    }
    ln.exp().round()
}

pub struct EdgeworthExpansion {
    pub k: usize,
    pub q: usize,
    pub mu: f64,
    /// P_{Q,n}, including the constant term
    pub poly: Poly,
}

impl EdgeworthExpansion {
    /// ν_m from the symbolic expansion of exp(½Σ_{ℓ=3}^Q (2i)^ℓ tr[(D̃^{[t]})^ℓ]/ℓ).
    pub fn build(ctx: &CharFnContext, q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::Domain("Q must be at least 2".into()));
        }
        let k = ctx.k;
        let forms = if q >= 3 { trace_forms(ctx, q)? } else { BTreeMap::new() };
        let mut s = Poly::zero(k, q);
        for (l, form) in &forms {
            let c = C64::new(0.0, 2.0).powu(*l as u32) * (0.5 / *l as f64);
            for (m, v) in form {
                s.add_term(m.clone(), c * v);
            }
        }
        let mut poly = Poly::one(k, q);
        let mut pow = Poly::one(k, q);
        let mut fact = 1.0;
        for j in 1..=q / 3 {
            pow = pow.mul(&s);
            fact *= j as f64;
            poly = poly.add(&pow.scale(C64::new(1.0 / fact, 0.0)));
        }
        Ok(EdgeworthExpansion { k, q, mu: ctx.mu, poly })
    }

    pub fn nu(&self, m: &[u32]) -> C64 {
        self.poly.terms.get(m).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    /// multinomial(q; m)·2^q·μ^{q/3}·q^{1/4}
    pub fn nu_bound(&self, m: &[u32]) -> f64 {
        let q: u32 = m.iter().sum();
        let qf = q as f64;
        multinomial(m) * 2f64.powf(qf) * self.mu.powf(qf / 3.0) * qf.powf(0.25)
    }

    /// Largest |ν_m|/bound over the computed table and the number of violations.
    pub fn coefficient_check(&self) -> CheckEntry {
        let mut worst = 0.0f64;
        let mut bad = 0usize;
        for (m, c) in &self.poly.terms {
            if m.iter().sum::<u32>() == 0 {
                continue;
            }
            let r = c.norm() / self.nu_bound(m);
            worst = worst.max(r);
            if r > 1.0 {
                bad += 1;
            }
        }
        CheckEntry::le("cltcheck.edgeworth_coeffs", "|ν_m| ≤ multinomial·2^q·μ^{q/3}·q^{1/4}", worst, 1.0, 0.0)
            .with_note(format!("K={}, Q={}, {} coefficients, {bad} violations", self.k, self.q, self.poly.terms.len() - 1))
    }

    /// Radius where the remainder bound is finite: (Q+1)^{−1/(4Q+4)}μ^{−1/3}K^{−1/2}/2.
    pub fn radius(&self) -> f64 {
        let qp = (self.q + 1) as f64;
        qp.powf(-1.0 / (4.0 * qp)) * self.mu.powf(-1.0 / 3.0) / (self.k as f64).sqrt() / 2.0
    }

    /// The region with the literal exponent +1/(4Q+4), where the series need not converge.
    pub fn stated_radius(&self) -> f64 {
        let qp = (self.q + 1) as f64;
        qp.powf(1.0 / (4.0 * qp)) * self.mu.powf(-1.0 / 3.0) / (self.k as f64).sqrt() / 2.0
    }

    pub fn remainder_bound(&self, t: &[f64]) -> Result<f64> {
        let r = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r >= self.radius() {
            return Err(Error::Range(format!("‖t‖ = {r} outside the validity region (< {})", self.radius())));
        }
        let qp = (self.q + 1) as f64;
        let a = 2.0 * (self.k as f64).sqrt() * self.mu.powf(1.0 / 3.0) * r;
        Ok(qp.powf(0.25) * a.powf(qp) / (1.0 - a * qp.powf(1.0 / (4.0 * qp))))
    }

    /// |Ψₙ*(t)e^{‖t‖²/2} − P_{Q,n}(t)| ≤ bound at `radii` (fractions of the radius) along `dirs`.
    pub fn remainder_check(&self, ctx: &CharFnContext, dirs: &[Vec<f64>], fractions: &[f64]) -> Result<CheckEntry> {
        let rad = self.radius();
        let mut worst = f64::NEG_INFINITY;
        let mut bad = 0usize;
        let mut count = 0usize;
        for u in dirs {
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            let unit: Vec<f64> = u.iter().map(|v| v / norm).collect();
            let eigs = ctx.spectrum(&unit);
            for f in fractions {
                let r = f * rad;
                let t: Vec<f64> = unit.iter().map(|v| v * r).collect();
                let lhs = (psi_star_on_ray(&eigs, r) * (0.5 * r * r).exp() - self.poly.eval(&t)).norm();
                let rhs = self.remainder_bound(&t)?;
                worst = worst.max(lhs - rhs);
                if lhs > rhs {
                    bad += 1;
                }
                count += 1;
            }
        }
        Ok(CheckEntry::le("cltcheck.edgeworth_remainder", "|Ψₙ*e^{‖t‖²/2} − P_{Q,n}| ≤ remainder bound", worst, 0.0, 0.0)
            .with_note(format!("K={}, Q={}, {count} points, {bad} violations", self.k, self.q)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_cov::build_basis;

    fn identity_ctx(n: usize) -> (BasisSystem, CharFnContext) {
        let b = build_basis(n, 0, 0).unwrap();
        let i = DMatrix::identity(n, n);
        let ctx = CharFnContext::new(&i, &i, &b).unwrap();
        (b, ctx)
    }

    #[test]
    fn chi_square_char_fn() {
        let n = 64;
        let (_, ctx) = identity_ctx(n);
        for t in [0.0, 0.3, -1.7, 5.0] {
            let got = ctx.char_fn(&[t]).unwrap();
            let want = C64::new(1.0, -2.0 * t / (n as f64).sqrt()).powf(-(n as f64) / 2.0);
            assert!((got - want).norm() < 1e-12, "{t}: {got} vs {want}");
        }
        assert_eq!(ctx.char_fn_standardized(&[0.0]).unwrap(), C64::new(1.0, 0.0));
        assert!((ctx.mu - 1.0 / (2.0 * n as f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn hermitian_and_modulus() {
        let (_, ctx) = identity_ctx(32);
        for t in [0.2, 1.0, 4.0] {
            let a = ctx.char_fn_standardized(&[t]).unwrap();
            let b = ctx.char_fn_standardized(&[-t]).unwrap();
            assert_eq!(a, b.conj());
            assert!((a.norm() - ctx.modulus_standardized(&[t]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn series_matches_direct() {
        let (_, ctx) = identity_ctx(64);
        let t = 0.4 / ctx.mu;
        let eigs = ctx.spectrum(&[1.0]);
        let direct = ctx.char_fn_standardized(&[t]).unwrap();
        let mut s = C64::new(0.0, 0.0);
        for l in 3..400 {
            let tr: f64 = eigs.iter().map(|v| (v * t).powi(l)).sum();
            s += C64::new(0.0, 2.0).powu(l as u32) * (0.5 * tr / l as f64);
        }
        assert!(((s - 0.5 * t * t).exp() - direct).norm() < 1e-10);
    }

    #[test]
    fn inversion_recovers_gaussian() {
        let g = InversionGrid::default();
        let (xs, f) = invert_density_1d(&|t: f64| C64::new((-0.5 * t * t).exp(), 0.0), 9.0, &g);
        let worst = xs.iter().zip(&f).map(|(x, v)| (v - (-0.5 * x * x).exp() / (2.0 * PI).sqrt()).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6);
        let tv = tv_vs_std_normal_1d(&|t: f64| C64::new((-0.5 * t * t).exp(), 0.0), 9.0, &g);
        assert!(tv < 1e-6);
    }

    #[test]
    fn shifted_normal_tv_1d() {
        let g = InversionGrid::default();
        let tv = tv_vs_std_normal_1d(&|t: f64| C64::new(0.0, t).exp() * (-0.5 * t * t).exp(), 9.0, &g);
        let want = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(0.5) - 1.0;
        assert!((tv - want).abs() < 1e-6, "{tv} vs {want}");
        assert!((want - 0.38292).abs() < 1e-5);
    }

    #[test]
    fn shifted_normal_tv_2d() {
        let g = InversionGrid { half_width: 8.0, n_phi: 80, n_r: 120, n_x: 161, ..Default::default() };
        let tv = tv_vs_std_normal_2d(
            &|i: usize, r: f64| {
                let c = (PI * i as f64 / 80.0).cos();
                C64::new(0.0, r * c).exp() * (-0.5 * r * r).exp()
            },
            8.0,
            &g,
        );
        let want = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(0.5) - 1.0;
        assert!((tv - want).abs() < 2e-3, "{tv} vs {want}");
    }

    #[test]
    fn tv_matches_chi_square() {
        for n in [64, 256] {
            let (_, ctx) = identity_ctx(n);
            let tv = ctx.tv_oracle(&InversionGrid::default()).unwrap().tv;
            let direct = tv_chi2_standardized(n);
            assert!((tv - direct).abs() < 1e-6, "n={n}: {tv} vs {direct}");
        }
    }

    #[test]
    fn edgeworth_k1_third_coefficient() {
        let (_, ctx) = identity_ctx(64);
        let e = EdgeworthExpansion::build(&ctx, 6).unwrap();
        let p3: f64 = ctx.spectrum(&[1.0]).iter().map(|v| v.powi(3)).sum();
        assert!((e.nu(&[3]) - C64::new(0.0, -4.0 / 3.0 * p3)).norm() < 1e-15);
        assert_eq!(e.nu(&[1]), C64::new(0.0, 0.0));
        assert_eq!(e.nu(&[2]), C64::new(0.0, 0.0));
        assert!(e.coefficient_check().pass);
        assert!(e.remainder_bound(&[0.0]).unwrap() == 0.0);
        assert!(e.remainder_bound(&[e.radius() * 1.01]).is_err());
        assert!(e.radius() < e.stated_radius());
    }

    fn k2_ctx(n: usize) -> (BasisSystem, CharFnContext) {
        let b = build_basis(n, 0, 1).unwrap();
        let c = b.combine(&[(n as f64).sqrt(), 0.2 * (n as f64).sqrt()]);
        let ctx = CharFnContext::new(&c, &c, &b).unwrap();
        (b, ctx)
    }

    #[test]
    fn k2_trace_forms_match_words() {
        let (_, ctx) = k2_ctx(24);
        let fit = trace_forms_k2(&ctx, 6).unwrap();
        let dense = trace_forms_dense(&ctx, 6).unwrap();
        for (l, form) in &dense {
            for (m, v) in form {
                let f = fit[l][m];
                assert!((f - v).abs() < 1e-10 * (1.0 + v.abs()), "ℓ={l} m={m:?}: {f} vs {v}");
            }
        }
        assert!(ctx.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn k2_remainder_and_bounds() {
        let (_, ctx) = k2_ctx(64);
        let e = EdgeworthExpansion::build(&ctx, 6).unwrap();
        assert!(e.coefficient_check().pass);
        let dirs: Vec<Vec<f64>> = (0..5).map(|i| {
            let p = 2.0 * PI * i as f64 / 5.0;
            vec![p.cos(), p.sin()]
        })
        .collect();
        let fr: Vec<f64> = (1..=10).map(|i| i as f64 / 10.5).collect();
        let c = e.remainder_check(&ctx, &dirs, &fr).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(ctx.spectral_bound_check(&dirs).unwrap().pass);
    }

    #[test]
    fn tail_bound_and_numeric() {
        let (_, ctx) = identity_ctx(256);
        assert!(ctx.fourier_tail_bound(5.0) > ctx.fourier_tail_bound(10.0));
        let c = ctx.fourier_tail_check(5.0, 1).unwrap();
        assert!(c.pass, "{c:?}");
        let full = ctx.fourier_tail_numeric(0.0, 1).unwrap();
        // ∫|Ψ*| over ℝ for the chi-square case by direct quadrature
        let (xs, ws) = gauss_legendre_on(4000, 0.0, 200.0);
        let want: f64 = 2.0 * xs.iter().zip(&ws).map(|(x, w)| w * (1.0 + 2.0 * x * x / 256.0).powf(-64.0)).sum::<f64>();
        assert!((full - want).abs() < 1e-8 * want);
    }

    #[test]
    fn poly_arith() {
        let mut p = Poly::zero(2, 3);
        p.add_term(vec![1, 0], C64::new(1.0, 0.0));
        p.add_term(vec![0, 1], C64::new(2.0, 0.0));
        let sq = p.mul(&p);
        assert_eq!(sq.terms[&vec![1, 1]], C64::new(4.0, 0.0));
        assert!((sq.eval(&[1.0, 1.0]) - C64::new(9.0, 0.0)).norm() < 1e-15);
        assert_eq!(multinomial(&[2, 1]), 3.0);
    }
}
