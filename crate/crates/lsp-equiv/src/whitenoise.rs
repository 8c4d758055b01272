//! The bivariate white-noise experiment dX = log f dt dx + aₙ dW in coefficient space,
//! its pilot estimator, the localized chain and the GOE connection.
//!
//! The sheet W only enters through ⟨φ_j, dW⟩, which are iid N(0,1) for the orthonormal φ system.

use crate::basis_cov::{build_basis, build_theta, BasisSystem};
use crate::circulant::{hom_defect_bound_rigorous, mcheck_element, CirculantElement, PsiMap, TrigPoly};
use crate::error::{Error, Result};
use crate::gaussianize::{sample_truncated_noise, std_normal_vec, LocalizationConfig};
use crate::linalg::{cholesky, matmul, spectral_norm_sym, sym_eigenvalues, SymEig};
use crate::quad::Grid2;
use crate::report::CheckEntry;
use crate::rng::{stream, Stream};
use crate::sparse::Banded;
use crate::spectral::{enumerate, enumerate_extended, transform_inv_sqrt, transform_log, BasisIndex, GridFunction, SpectralDensity};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Smoothness s* used by the inverse-square-root projection.
pub const S_STAR: f64 = 7.0;

/// aₙ* = aₙ√(πn), which equals 2π for the configured noise level.
pub const A_STAR: f64 = 2.0 * PI;

/// Normalization of the drift of Y: 1/(2π√2).
pub const Y_NORM: f64 = 1.0 / (2.0 * PI * std::f64::consts::SQRT_2);

/// aₙ = 2√(π/n)
pub fn noise_level(n: usize) -> f64 {
    2.0 * (PI / n as f64).sqrt()
}

pub fn a_star(n: usize) -> f64 {
    noise_level(n) * (PI * n as f64).sqrt()
}

/// Jₙ = ⌈√n⌉
pub fn j_n(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// First `j` basis functions, starting with the (κ,κ) block.
pub fn observation_indices(kappa: u32, j: usize) -> Vec<BasisIndex> {
    enumerate_extended(kappa, kappa, j.max(crate::spectral::block_size(kappa, kappa)))
}

#[derive(Clone, Debug)]
pub struct WhiteNoiseObservation {
    pub n: usize,
    pub a_n: f64,
    pub indices: Vec<BasisIndex>,
    /// ⟨φ_j, dX⟩
    pub coeffs: Vec<f64>,
}

impl WhiteNoiseObservation {
    pub fn j(&self) -> usize {
        self.indices.len()
    }

    /// α̃_j = √(2πn)·⟨φ_j, dX⟩
    pub fn alpha_tilde(&self) -> Vec<f64> {
        let s = (2.0 * PI * self.n as f64).sqrt();
        self.coeffs.iter().map(|c| s * c).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "a_n": self.a_n,
            "indices": self.indices.iter().map(|k| format!("{k:?}")).collect::<Vec<_>>(),
            "coeffs": self.coeffs,
        })
    }
}

/// ⟨φ_j, log f⟩ for every listed index, by quadrature.
pub fn log_coefficients(f: &SpectralDensity, indices: &[BasisIndex], grid: &Grid2) -> Result<Vec<f64>> {
    Ok(transform_log(f, grid)?.project_onto(indices, f.class).coeff_vector(indices))
}

/// Drift coefficients computed once; each draw only adds noise.
#[derive(Clone, Debug)]
pub struct WhiteNoiseModel {
    pub n: usize,
    pub a_n: f64,
    pub indices: Vec<BasisIndex>,
    pub log_coeffs: Vec<f64>,
}

impl WhiteNoiseModel {
    pub fn new(f: &SpectralDensity, n: usize, kappa: u32, grid: &Grid2) -> Result<Self> {
        let indices = observation_indices(kappa, j_n(n));
        let log_coeffs = log_coefficients(f, &indices, grid)?;
        Ok(WhiteNoiseModel { n, a_n: noise_level(n), indices, log_coeffs })
    }

    pub fn with_noise_level(mut self, a_n: f64) -> Self {
        self.a_n = a_n;
        self
    }

    pub fn draw(&self, rng: &mut Stream) -> WhiteNoiseObservation {
        let coeffs = self
            .log_coeffs
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + self.a_n * z
            })
            .collect();
        WhiteNoiseObservation { n: self.n, a_n: self.a_n, indices: self.indices.clone(), coeffs }
    }
}

pub fn simulate_wn(f: &SpectralDensity, n: usize, kappa: u32, seed: u64) -> Result<WhiteNoiseObservation> {
    let model = WhiteNoiseModel::new(f, n, kappa, &Grid2::default_order())?;
    Ok(model.draw(&mut stream(seed, 0)))
}

/// B(J) = ‖log f‖² − Σ_{j≤J}⟨log f, φ_j⟩², by Parseval on the grid.
pub fn tail_functional(f: &SpectralDensity, indices: &[BasisIndex], grid: &Grid2) -> Result<f64> {
    let lf = transform_log(f, grid)?;
    let head: f64 = lf.project_onto(indices, f.class).coeffs.values().map(|v| v * v).sum();
    Ok((lf.l2_norm_sq() - head).max(0.0))
}

#[derive(Clone, Debug)]
pub struct WhiteNoisePilot {
    pub n: usize,
    pub k: usize,
    pub alpha_tilde: Vec<f64>,
    /// Σ_{j≤J}⟨φ_j, dX⟩φ_j
    pub log_f: SpectralDensity,
    /// Projection of exp(log_f) onto the first K indices.
    pub f_hat: SpectralDensity,
    pub alpha_hat: Vec<f64>,
}

impl WhiteNoisePilot {
    /// ‖α̂ − α‖²
    pub fn sq_error(&self, alpha: &[f64]) -> Result<f64> {
        if alpha.len() != self.k {
            return Err(Error::Dimension { expected: self.k, got: alpha.len() });
        }
        Ok(self.alpha_hat.iter().zip(alpha).map(|(a, b)| (a - b).powi(2)).sum())
    }
}

pub fn pilot_estimate(obs: &WhiteNoiseObservation, k: usize, grid: &Grid2, class: crate::spectral::ClassParams) -> Result<WhiteNoisePilot> {
    if k > obs.j() {
        return Err(Error::Precondition(format!("K = {k} exceeds J = {}", obs.j())));
    }
    let log_f = SpectralDensity::from_coeffs(class, obs.indices.iter().cloned().zip(obs.coeffs.iter().cloned()));
    let expo = log_f.on_grid(grid).map(f64::exp);
    if expo.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("exp of the smoothed log-estimate is not finite on the grid".into()));
    }
    let idx = &obs.indices[..k];
    let f_hat = expo.project_onto(idx, class);
    let s = (2.0 * PI * obs.n as f64).sqrt();
    let alpha_hat = f_hat.coeff_vector(idx).iter().map(|c| s * c).collect();
    Ok(WhiteNoisePilot { n: obs.n, k, alpha_tilde: obs.alpha_tilde(), log_f, f_hat, alpha_hat })
}

/// aⱼ = √(2πn)·⟨f, φⱼ⟩ for f in the φ span.
pub fn span_alpha(f: &SpectralDensity, indices: &[BasisIndex], n: usize) -> Vec<f64> {
    let s = (2.0 * PI * n as f64).sqrt();
    f.coeff_vector(indices).iter().map(|c| s * c).collect()
}

/// (2πn)^{−1/2}·Σ cⱼφⱼ
pub fn density_from_alpha(alpha: &[f64], indices: &[BasisIndex], n: usize, class: crate::spectral::ClassParams) -> SpectralDensity {
    let s = 1.0 / (2.0 * PI * n as f64).sqrt();
    SpectralDensity::from_coeffs(class, indices.iter().cloned().zip(alpha.iter().map(|a| s * a)))
}

#[derive(Clone, Debug)]
pub struct LocalizedDrift {
    pub f_n: SpectralDensity,
    pub f_hat: SpectralDensity,
    /// n/(4π)·‖log f − log fₙ‖²
    pub equiv1: f64,
    /// n/(4π)·‖log(fₙ/f̂) − (fₙ/f̂ − 1)‖²
    pub equiv2: f64,
    pub sup_diff: f64,
    pub sup_bound: f64,
}

impl LocalizedDrift {
    pub fn checks(&self) -> Vec<CheckEntry> {
        vec![CheckEntry::le(
            "wn.drift_sup",
            "sup-norm distance of the localized drifts",
            self.sup_diff,
            self.sup_bound,
            1e-12 * self.sup_bound.max(1.0),
        )]
    }
}

fn range_check(name: &str, g: &GridFunction, rho_star: f64) -> Result<()> {
    let lo = g.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = g.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo < rho_star / 2.0 || hi > 2.0 / rho_star {
        return Err(Error::Localization(format!(
            "{name} ranges over [{lo}, {hi}], outside [{}, {}]",
            rho_star / 2.0,
            2.0 / rho_star
        )));
    }
    Ok(())
}

/// fₙ from α_θ and f̂ = fₙ + (2πn)^{−1/2}Ση̃ⱼφⱼ, with the two drift-equivalence quantities.
pub fn localized_drift(
    f: &SpectralDensity,
    alpha_theta: &[f64],
    eta_tilde: &[f64],
    indices: &[BasisIndex],
    n: usize,
    gamma: f64,
    grid: &Grid2,
) -> Result<LocalizedDrift> {
    if alpha_theta.len() != indices.len() || eta_tilde.len() != indices.len() {
        return Err(Error::Dimension { expected: indices.len(), got: alpha_theta.len().min(eta_tilde.len()) });
    }
    let class = f.class;
    let f_n = density_from_alpha(alpha_theta, indices, n, class);
    let f_hat = f_n.add(&density_from_alpha(eta_tilde, indices, n, class));
    let gn = f_n.on_grid(grid);
    let gh = f_hat.on_grid(grid);
    range_check("f_n", &gn, class.rho_star)?;
    range_check("f_hat", &gh, class.rho_star)?;
    let lf = transform_log(f, grid)?;
    let d1: Vec<f64> = lf.values.iter().zip(&gn.values).map(|(a, b)| a - b.ln()).collect();
    let d2: Vec<f64> = gn
        .values
        .iter()
        .zip(&gh.values)
        .map(|(a, b)| {
            let r = a / b;
            r.ln() - (r - 1.0)
        })
        .collect();
    let scale = n as f64 / (4.0 * PI);
    let sup_diff = gn.values.iter().zip(&gh.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(LocalizedDrift {
        equiv1: scale * grid.inner(&d1, &d1),
        equiv2: scale * grid.inner(&d2, &d2),
        sup_diff,
        sup_bound: (indices.len() as f64).sqrt() * gamma / (PI * (n as f64).sqrt()),
        f_n,
        f_hat,
    })
}

/// {∫φⱼφⱼ'·w}
pub fn weighted_gram(w: &[f64], indices: &[BasisIndex], grid: &Grid2) -> DMatrix<f64> {
    let phis: Vec<Vec<f64>> = indices.iter().map(|k| grid.sample(|t, x| k.eval(t, x))).collect();
    let k = indices.len();
    let mut g = DMatrix::zeros(k, k);
    for a in 0..k {
        let wa: Vec<f64> = phis[a].iter().zip(w).map(|(p, v)| p * v).collect();
        for b in 0..=a {
            let v = grid.inner(&wa, &phis[b]);
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// Γ_f̂ = {∫φⱼφⱼ'/f̂²}
pub fn gamma_fhat(f_hat: &SpectralDensity, indices: &[BasisIndex], grid: &Grid2) -> Result<DMatrix<f64>> {
    let v = f_hat.on_grid(grid);
    if let Some(bad) = v.values.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("f̂ takes the nonpositive value {bad}")));
    }
    let w: Vec<f64> = v.values.iter().map(|x| 1.0 / (x * x)).collect();
    Ok(weighted_gram(&w, indices, grid))
}

/// Y ~ N(Γ_f̂·α_θ·Y_NORM, Γ_f̂)
#[derive(Clone, Debug)]
pub struct SufficientY {
    pub gamma: DMatrix<f64>,
    pub mean: DVector<f64>,
    chol: DMatrix<f64>,
    /// ‖f̂‖_∞ on the grid
    pub f_hat_sup: f64,
}

impl SufficientY {
    pub fn draw(&self, rng: &mut Stream) -> DVector<f64> {
        &self.mean + &self.chol * std_normal_vec(self.mean.len(), rng)
    }

    pub fn checks(&self) -> Vec<CheckEntry> {
        let lo = SymEig::new(&self.gamma).min();
        let rhs = 1.0 / (self.f_hat_sup * self.f_hat_sup);
        vec![CheckEntry::le("wn.gamma_fhat_lower", "Γ_f̂ ≥ ‖f̂‖⁻²_∞", rhs, lo, 1e-10 * rhs)]
    }
}

pub fn sufficient_y(alpha_theta: &[f64], f_hat: &SpectralDensity, indices: &[BasisIndex], grid: &Grid2) -> Result<SufficientY> {
    if alpha_theta.len() != indices.len() {
        return Err(Error::Dimension { expected: indices.len(), got: alpha_theta.len() });
    }
    let gamma = gamma_fhat(f_hat, indices, grid)?;
    let chol = cholesky(&gamma)?;
    let mean = &gamma * DVector::from_column_slice(alpha_theta) * Y_NORM;
    let f_hat_sup = f_hat.on_grid(grid).sup_abs();
    Ok(SufficientY { gamma, mean, chol, f_hat_sup })
}

#[derive(Clone, Debug)]
pub struct InvSqrtProjection {
    /// Σ⟨f̂^{−1/2}, φⱼ⟩φⱼ
    pub proxy: SpectralDensity,
    pub sup_error: f64,
    pub sup_norm: f64,
}

pub fn inv_sqrt_projection(f_hat: &SpectralDensity, indices: &[BasisIndex], grid: &Grid2) -> Result<InvSqrtProjection> {
    let target = transform_inv_sqrt(f_hat, grid)?;
    let proxy = target.project_onto(indices, f_hat.class);
    let pv = proxy.on_grid(grid);
    let sup_error = pv.values.iter().zip(&target.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(InvSqrtProjection { sup_norm: pv.sup_abs(), proxy, sup_error })
}

/// (K, sup error, error/K^{1−s*/2}) for each K, projecting onto enlarged blocks around κ.
pub fn inv_sqrt_decay(f_hat: &SpectralDensity, kappa: u32, ks: &[usize], grid: &Grid2) -> Result<Vec<(usize, f64, f64)>> {
    ks.iter()
        .map(|&k| {
            let p = inv_sqrt_projection(f_hat, &enumerate_extended(kappa, kappa, k), grid)?;
            Ok((k, p.sup_error, p.sup_error / (k as f64).powf(1.0 - S_STAR / 2.0)))
        })
        .collect()
}

/// widetilde C^{−1/2} = Σ cⱼ√(n/2π)·M̌ⱼ for proxy coefficients cⱼ.
pub fn c_tilde_element(proxy: &SpectralDensity, indices: &[BasisIndex], n: usize) -> CirculantElement {
    let s = (n as f64 / (2.0 * PI)).sqrt();
    let mut out = CirculantElement::zero(n);
    for idx in indices {
        let c = proxy.coeff(idx);
        if c != 0.0 {
            out = out.add(&mcheck_element(n, idx).scale(Complex64::new(c * s, 0.0)));
        }
    }
    out
}

fn psi_exact(a: &CirculantElement) -> TrigPoly {
    TrigPoly { coeffs: a.coeffs.clone() }
}

fn coef_l1(a: &CirculantElement) -> f64 {
    a.coeffs.values().map(|v| v.norm()).sum()
}

#[derive(Clone, Debug)]
pub struct DefectEntry {
    /// ‖δⱼ‖²_{L₂ⁿ}
    pub norm_sq: f64,
    /// Rigorous bound from two homomorphism-defect estimates.
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct WhiteNoiseGeometry {
    pub n: usize,
    pub k: usize,
    pub gamma_fhat: DMatrix<f64>,
    pub gamma_tilde: DMatrix<f64>,
    pub gamma_check: DMatrix<f64>,
    pub c_tilde: CirculantElement,
    pub defects: Vec<DefectEntry>,
    pub proxy: InvSqrtProjection,
}

impl WhiteNoiseGeometry {
    pub fn build(f_hat: &SpectralDensity, basis_n: usize, kappa: u32, grid: &Grid2) -> Result<Self> {
        let indices = enumerate(kappa, kappa);
        let n = basis_n;
        let psi3 = PsiMap::new(n, kappa, kappa, 3)?;
        let gamma_fhat = gamma_fhat(f_hat, &indices, grid)?;
        let proxy = inv_sqrt_projection(f_hat, &indices, grid)?;
        let pv = proxy.proxy.on_grid(grid);
        let w4: Vec<f64> = pv.values.iter().map(|v| v.powi(4)).collect();
        let gamma_tilde = weighted_gram(&w4, &indices, grid);
        let c_tilde = c_tilde_element(&proxy.proxy, &indices, n);
        let psi_c = psi_exact(&c_tilde);
        let c_l1 = coef_l1(&c_tilde);
        let k = indices.len();
        let mut prods = Vec::with_capacity(k);
        let mut defects = Vec::with_capacity(k);
        for idx in &indices {
            let m = mcheck_element(n, idx);
            let mc = m.mul(&c_tilde);
            let cmc = c_tilde.mul(&mc);
            let lhs = psi3.forward(&cmc)?;
            let rhs = psi_c.mul(&psi_exact(&m)).mul(&psi_c);
            let norm_sq = lhs.sub(&rhs).l2n_norm_sq(n);
            let bound = (c_l1 * hom_defect_bound_rigorous(&m, &c_tilde).sqrt() + hom_defect_bound_rigorous(&c_tilde, &mc).sqrt()).powi(2);
            defects.push(DefectEntry { norm_sq, bound });
            prods.push(cmc);
        }
        let mut gamma_check = DMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let v = prods[a].frob_inner(&prods[b]).re;
                gamma_check[(a, b)] = v;
                gamma_check[(b, a)] = v;
            }
        }
        Ok(WhiteNoiseGeometry { n, k, gamma_fhat, gamma_tilde, gamma_check, c_tilde, defects, proxy })
    }

    /// ‖Γ_f̂^{−1/2}(Γ_f̂ − Γ̃_f̂)Γ_f̂^{−1/2}‖²_F
    pub fn gamma_relative_defect(&self) -> Result<f64> {
        let is = SymEig::new(&self.gamma_fhat).inv_sqrt()?;
        Ok((&is * (&self.gamma_fhat - &self.gamma_tilde) * &is).norm_squared())
    }

    pub fn c_tilde_dense(&self) -> Result<DMatrix<f64>> {
        let mut b = self.c_tilde.to_real()?;
        b.mirror_upper();
        Ok(b.to_dense())
    }

    /// K²/n² + K⁴/n⁴
    pub fn defect_scale(&self) -> f64 {
        let r = self.k as f64 / self.n as f64;
        r * r + r.powi(4)
    }

    pub fn checks(&self) -> Vec<CheckEntry> {
        let mut out = Vec::new();
        let (worst, bnd) = self
            .defects
            .iter()
            .map(|d| (d.norm_sq, d.bound))
            .fold((0.0f64, f64::INFINITY), |(w, b), (x, y)| if x - y > w - b || w == 0.0 && b.is_infinite() { (x, y) } else { (w, b) });
        out.push(
            CheckEntry::le("wn.delta_defect", "defect of the triple product under Ψ", worst, bnd, 1e-12 * bnd.max(1e-300))
                .with_note(format!("max ‖δ_j‖² / (K²/n² + K⁴/n⁴) = {:.6e}", self.defects.iter().map(|d| d.norm_sq).fold(0.0, f64::max) / self.defect_scale())),
        );
        out
    }
}

/// ‖Δ̌ − Δ‖²_F, γ²·Σ‖M̌ⱼ − Mⱼ‖²_F
pub fn delta_check_distance(eta: &[f64], basis: &BasisSystem, gamma: f64) -> (f64, f64) {
    let mut d = Banded::zeros(basis.n);
    let mut budget = 0.0;
    for ((e, m), mc) in eta.iter().zip(&basis.m).zip(&basis.mcheck.matrices) {
        d.axpy(*e, mc);
        d.axpy(-*e, m);
        budget += m.dist_frob(mc).powi(2);
    }
    (d.frob_sq(), gamma * gamma * budget)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoeConnection {
    /// ¼‖U‖²_F
    pub kl: f64,
    pub u_frob_sq: f64,
    pub terms: [f64; 3],
    pub delta_diff_sq: f64,
    pub delta_diff_bound: f64,
    pub c_tilde_sp_sq: f64,
    pub c_tilde_sp_sq_bound: f64,
}

impl GoeConnection {
    pub fn checks(&self) -> Vec<CheckEntry> {
        let s: f64 = self.terms.iter().sum();
        vec![
            CheckEntry::le("wn.goe_breakdown", "three-term bound of the GOE shift distance", self.u_frob_sq, s, 1e-10 * s.max(1e-300)),
            CheckEntry::le(
                "wn.delta_check",
                "‖Δ̌−Δ‖²_F ≤ γ²Σ‖M̌_j−M_j‖²_F",
                self.delta_diff_sq,
                self.delta_diff_bound,
                1e-12 * self.delta_diff_bound.max(1e-300),
            ),
            CheckEntry::le("wn.c_tilde_sp", "‖C̃^{-1/2}‖²_sp bound", self.c_tilde_sp_sq, self.c_tilde_sp_sq_bound, 1e-10 * self.c_tilde_sp_sq_bound),
        ]
    }
}

fn banded_sp(b: &Banded) -> f64 {
    if b.n <= 512 {
        spectral_norm_sym(&b.to_dense())
    } else {
        b.gershgorin()
    }
}

/// KL between the GOE experiments shifted by |C̃|Δ̌|C̃|/aₙ* and C^{−1/2}ΔC^{−1/2}, with the
/// three-term breakdown. `c_tilde` is widetilde C^{−1/2}; Δ and Δ̌ come from η̃.
pub fn goe_connection(
    c_tilde: &CirculantElement,
    proxy_coeffs: &[f64],
    c_inv_sqrt: &DMatrix<f64>,
    eta: &[f64],
    basis: &BasisSystem,
    gamma: f64,
) -> Result<GoeConnection> {
    let n = basis.n;
    if c_inv_sqrt.nrows() != n || c_tilde.n != n {
        return Err(Error::Dimension { expected: n, got: c_inv_sqrt.nrows().max(c_tilde.n) });
    }
    if eta.len() != basis.k() || proxy_coeffs.len() != basis.k() {
        return Err(Error::Dimension { expected: basis.k(), got: eta.len() });
    }
    let mut ct_b = c_tilde.to_real()?;
    ct_b.mirror_upper();
    let ct = ct_b.to_dense();
    let abs_ct = match cholesky(&ct) {
        Ok(_) => ct.clone(),
        Err(_) => SymEig::new(&ct).abs(),
    };
    let b = &abs_ct / A_STAR.sqrt();
    let mut delta = Banded::zeros(n);
    let mut delta_check = Banded::zeros(n);
    for ((e, m), mc) in eta.iter().zip(&basis.m).zip(&basis.mcheck.matrices) {
        delta.axpy(*e, m);
        delta_check.axpy(*e, mc);
    }
    let shifted_check = matmul(&b, &delta_check.mul_dense(&b));
    let shifted = matmul(c_inv_sqrt, &delta.mul_dense(c_inv_sqrt));
    let u_frob_sq = (&shifted_check - &shifted).norm_squared();

    let bd = (&b - c_inv_sqrt).norm_squared();
    let ct_sp_sq = if n <= 512 { spectral_norm_sym(&ct).powi(2) } else { ct_b.gershgorin().powi(2) };
    let cis_sp_sq = sym_eigenvalues(c_inv_sqrt).iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2);
    let (dd, dd_bound) = delta_check_distance(eta, basis, gamma);
    let dcheck_sp_sq = banded_sp(&delta_check).powi(2);
    let delta_sp_sq = banded_sp(&delta).powi(2);
    let terms = [
        3.0 / A_STAR * bd * dcheck_sp_sq * ct_sp_sq,
        3.0 / A_STAR * cis_sp_sq * dd * ct_sp_sq,
        3.0 * cis_sp_sq * delta_sp_sq * bd,
    ];
    let s = (n as f64 / (2.0 * PI)).sqrt();
    let sp_bound: f64 = proxy_coeffs.iter().zip(&basis.mcheck.matrices).map(|(c, m)| c.abs() * m.gershgorin() * s).sum();
    Ok(GoeConnection {
        kl: u_frob_sq / 4.0,
        u_frob_sq,
        terms,
        delta_diff_sq: dd,
        delta_diff_bound: dd_bound,
        c_tilde_sp_sq: ct_sp_sq,
        c_tilde_sp_sq_bound: sp_bound * sp_bound,
    })
}

/// Localized white-noise setup at one n: θ(f), bases, α_θ and the replicate-independent pieces.
pub struct GoeStudy {
    pub n: usize,
    pub kappa: u32,
    pub basis: BasisSystem,
    pub alpha_theta: Vec<f64>,
    pub localization: LocalizationConfig,
}

impl GoeStudy {
    pub fn new(f: &SpectralDensity, n: usize, kappa: u32, localization: LocalizationConfig) -> Result<Self> {
        let theta = build_theta(f, n)?;
        let basis = build_basis(n, kappa, kappa)?;
        let alpha_theta = basis.coefficients(&theta.entries);
        Ok(GoeStudy { n, kappa, basis, alpha_theta, localization })
    }

    /// One replicate keyed by (seed, index).
    pub fn replicate(&self, f: &SpectralDensity, index: u64, grid: &Grid2) -> Result<GoeConnection> {
        let k = self.basis.k();
        let mut rng = stream(self.localization.seed, index);
        let eta: Vec<f64> = sample_truncated_noise(&self.localization, k, &mut rng)?.iter().cloned().collect();
        let alpha_hat: Vec<f64> = self.alpha_theta.iter().zip(&eta).map(|(a, e)| a + e).collect();
        let c = self.basis.combine(&alpha_hat);
        let c_inv_sqrt = SymEig::new(&c).inv_sqrt()?;
        let indices = &self.basis.indices;
        let f_hat = density_from_alpha(&alpha_hat, indices, self.n, f.class);
        let proxy = inv_sqrt_projection(&f_hat, indices, grid)?;
        let c_tilde = c_tilde_element(&proxy.proxy, indices, self.n);
        goe_connection(&c_tilde, &proxy.proxy.coeff_vector(indices), &c_inv_sqrt, &eta, &self.basis, self.localization.gamma)
    }

    /// Replicate average of the KL together with every replicate's record.
    pub fn mean_kl(&self, f: &SpectralDensity, reps: usize, grid: &Grid2) -> Result<(f64, Vec<GoeConnection>)> {
        let runs = (0..reps as u64).map(|i| self.replicate(f, i, grid)).collect::<Result<Vec<_>>>()?;
        let m = runs.iter().map(|r| r.kl).sum::<f64>() / reps.max(1) as f64;
        Ok((m, runs))
    }
}
