//! The covariance-experiment chain: pre-smoothing, localization, sufficient statistic,
//! Gaussian summaries and the GOE experiments.

use crate::basis_cov::{rho_for, BasisSystem};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, spectral_norm, symmetrize, trace_product, SymEig};
use crate::report::CheckEntry;
use crate::rng::Stream;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::E;

/// Generic constant c of the eigenvalue statements.
pub const C_EIG: f64 = 0.9;

/// K_n, γ_n and β_n² as functions of n.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub adjust: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { adjust: 1.0 }
    }
}

impl Schedule {
    /// max(2, ⌊(n/log n)^{1/10}⌋·adjust)
    pub fn k_target(&self, n: usize) -> usize {
        let nf = n as f64;
        ((nf / nf.ln()).powf(0.1).floor() * self.adjust).floor().max(2.0) as usize
    }

    /// κ₁ = κ₂ = max(1, ⌊√(K_target/2)⌋), so K = (2κ+1)(κ+1) ≥ K_target.
    pub fn kappa(&self, n: usize) -> u32 {
        ((self.k_target(n) as f64 / 2.0).sqrt().floor() as u32).max(1)
    }

    pub fn k(&self, n: usize) -> usize {
        let k = self.kappa(n) as usize;
        (2 * k + 1) * (k + 1)
    }

    /// γ_n = K·log log(n + e²)
    pub fn gamma(&self, n: usize) -> f64 {
        self.k(n) as f64 * (n as f64 + E * E).ln().ln()
    }

    /// β_n² = K^{3/2}
    pub fn beta2(&self, n: usize) -> f64 {
        (self.k(n) as f64).powf(1.5)
    }

    pub fn localization(&self, n: usize, seed: u64) -> LocalizationConfig {
        LocalizationConfig { beta: self.beta2(n).sqrt(), gamma: self.gamma(n), seed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationConfig {
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl LocalizationConfig {
    /// K·β²/γ², the tail budget P[‖η‖ > γ] ≤ Kβ²/γ².
    pub fn tail_budget(&self, k: usize) -> f64 {
        k as f64 * self.beta * self.beta / (self.gamma * self.gamma)
    }

    /// Exact acceptance probability P[χ²_K ≤ γ²/β²].
    pub fn acceptance(&self, k: usize) -> f64 {
        if self.gamma.is_infinite() {
            return 1.0;
        }
        ChiSquared::new(k as f64).unwrap().cdf((self.gamma / self.beta).powi(2))
    }
}

pub fn std_normal_vec(k: usize, rng: &mut Stream) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

/// η ~ N(0, β²I_K) conditioned on ‖η‖ ≤ γ, by rejection.
pub fn sample_truncated_noise(cfg: &LocalizationConfig, k: usize, rng: &mut Stream) -> Result<DVector<f64>> {
    if !(cfg.gamma > 0.0) || !(cfg.beta > 0.0) {
        return Err(Error::Config("β and γ must be positive".into()));
    }
    let acc = cfg.acceptance(k);
    if acc < 1e-6 {
        return Err(Error::Config(format!("truncation acceptance probability {acc:e} below 1e-6")));
    }
    loop {
        let eta = std_normal_vec(k, rng) * cfg.beta;
        if eta.norm() <= cfg.gamma {
            return Ok(eta);
        }
    }
}

/// α̂ = {⟨xxᵀ, M_k⟩_F} = {xᵀM_kx}.
pub fn pilot_alpha(x: &DVector<f64>, basis: &BasisSystem) -> Result<DVector<f64>> {
    if x.len() != basis.n {
        return Err(Error::Dimension { expected: basis.n, got: x.len() });
    }
    Ok(DVector::from_iterator(basis.k(), basis.m.iter().map(|m| m.quad_form(x))))
}

/// Exact pilot risk E‖α̂ − α_θ‖² = 2Σ‖C_θ^{1/2}M_kC_θ^{1/2}‖²_F = 2Σ tr(M_kC_θM_kC_θ).
pub fn pilot_risk_exact(c_theta: &DMatrix<f64>, basis: &BasisSystem) -> f64 {
    basis
        .m
        .iter()
        .map(|m| {
            let a = m.mul_dense(c_theta);
            2.0 * trace_product(&a, &a)
        })
        .sum()
}

#[derive(Clone, Debug)]
pub struct Summaries {
    pub d_theta: DVector<f64>,
    pub gamma_theta: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub gamma_tilde: DMatrix<f64>,
}

/// d_θ, Γ_θ, Γ and Γ̃_θ for given C_θ and C.
pub fn gaussian_summaries(c_theta: &DMatrix<f64>, c: &DMatrix<f64>, basis: &BasisSystem) -> Result<Summaries> {
    let ci = SymEig::new(c).inv().map_err(|e| Error::Singular(format!("C: {e}")))?;
    let cti = SymEig::new(c_theta).inv().map_err(|e| Error::Singular(format!("C_θ: {e}")))?;
    let k = basis.k();
    // P_k = C^{-1}M_kC^{-1}, Q_k = C_θP_k, R_k = M_kC_θ^{-1}
    let p: Vec<DMatrix<f64>> = basis.m.iter().map(|m| m.mul_dense(&ci).transpose() * &ci).collect();
    let q: Vec<DMatrix<f64>> = p.iter().map(|pk| c_theta * pk).collect();
    let r: Vec<DMatrix<f64>> = basis.m.iter().map(|m| m.mul_dense(&cti)).collect();
    let mut d = DVector::zeros(k);
    let mut gt = DMatrix::zeros(k, k);
    let mut g = DMatrix::zeros(k, k);
    let mut gtil = DMatrix::zeros(k, k);
    for a in 0..k {
        d[a] = q[a].trace();
        for b in 0..=a {
            gt[(a, b)] = 2.0 * trace_product(&q[a], &q[b]);
            g[(a, b)] = 2.0 * basis.m[a].frob_inner_dense(&p[b]);
            gtil[(a, b)] = 2.0 * trace_product(&r[a], &r[b]);
            gt[(b, a)] = gt[(a, b)];
            g[(b, a)] = g[(a, b)];
            gtil[(b, a)] = gtil[(a, b)];
        }
    }
    Ok(Summaries { d_theta: d, gamma_theta: gt, gamma: g, gamma_tilde: gtil })
}

/// One realization of the localized chain.
#[derive(Clone, Debug)]
pub struct ExperimentState {
    pub n: usize,
    pub k: usize,
    pub theta: DMatrix<f64>,
    pub alpha_theta: DVector<f64>,
    pub eta_tilde: DVector<f64>,
    pub c_theta: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub b_theta: DMatrix<f64>,
    pub c_inv: DMatrix<f64>,
    pub c_inv_sqrt: DMatrix<f64>,
    pub c_eig: (f64, f64),
    pub neumann_ratio: f64,
    pub summaries: Summaries,
}

/// C = Σ(α_θ,k + η̃_k)M_k, Δ_θ = C − C_θ, B_θ = C^{-1} + C^{-1}Δ_θC^{-1}.
pub fn build_localized_c(
    alpha_theta: &DVector<f64>,
    eta_tilde: &DVector<f64>,
    basis: &BasisSystem,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (c, delta, b, _, _, _) = localized_parts(alpha_theta, eta_tilde, basis)?;
    Ok((c, delta, b))
}

#[allow(clippy::type_complexity)]
fn localized_parts(
    alpha_theta: &DVector<f64>,
    eta_tilde: &DVector<f64>,
    basis: &BasisSystem,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, (f64, f64, f64))> {
    let k = basis.k();
    if alpha_theta.len() != k || eta_tilde.len() != k {
        return Err(Error::Dimension { expected: k, got: alpha_theta.len().min(eta_tilde.len()) });
    }
    let coef: Vec<f64> = alpha_theta.iter().zip(eta_tilde.iter()).map(|(a, e)| a + e).collect();
    let c = basis.combine(&coef);
    let delta = basis.combine(eta_tilde.as_slice());
    let ce = SymEig::new(&c);
    let (lo, hi) = (ce.min(), ce.max());
    let ci = ce.inv().map_err(|_| Error::Localization(format!("C is not positive definite (min eig {lo:e})")))?;
    let cis = ce.inv_sqrt().map_err(|_| Error::Localization("C is not positive definite".into()))?;
    // spectral radius of C^{-1}Δ equals ‖C^{-1/2}ΔC^{-1/2}‖_sp
    let ratio = SymEig::new(&(&cis * &delta * &cis)).abs_max();
    if ratio >= 1.0 {
        return Err(Error::Localization(format!("‖C^-1 Δ‖_sp = {ratio} ≥ 1")));
    }
    let b = &ci + &ci * &delta * &ci;
    Ok((c, delta, symmetrize(&b), ci, cis, (lo, hi, ratio)))
}

impl ExperimentState {
    /// Build from θ (true covariance), its basis and a truncated-noise draw.
    pub fn build(theta: &DMatrix<f64>, basis: &BasisSystem, eta_tilde: &DVector<f64>) -> Result<Self> {
        let alpha = DVector::from_vec(basis.coefficients(theta));
        let c_theta = basis.combine(alpha.as_slice());
        let (c, delta, b_theta, c_inv, c_inv_sqrt, (lo, hi, ratio)) = localized_parts(&alpha, eta_tilde, basis)?;
        let summaries = gaussian_summaries(&c_theta, &c, basis)?;
        Ok(ExperimentState {
            n: basis.n,
            k: basis.k(),
            theta: theta.clone(),
            alpha_theta: alpha,
            eta_tilde: eta_tilde.clone(),
            c_theta,
            c,
            delta,
            b_theta,
            c_inv,
            c_inv_sqrt,
            c_eig: (lo, hi),
            neumann_ratio: ratio,
            summaries,
        })
    }

    /// max |d_θ − ½Γα_θ| relative to ‖d_θ‖.
    pub fn d_identity_residual(&self) -> f64 {
        let half = &self.summaries.gamma * &self.alpha_theta * 0.5;
        (&self.summaries.d_theta - half).norm() / self.summaries.d_theta.norm().max(1e-300)
    }

    /// Relative distance ‖Γ^{-1/2}(Γ − Γ_θ)Γ^{-1/2}‖_F.
    pub fn gamma_distance(&self) -> Result<f64> {
        let gis = SymEig::new(&self.summaries.gamma).inv_sqrt()?;
        Ok((&gis * (&self.summaries.gamma - &self.summaries.gamma_theta) * &gis).norm())
    }

    pub fn checks(&self, basis: &BasisSystem, gamma_n: f64, rho: f64) -> Vec<CheckEntry> {
        let mut out = Vec::new();
        out.push(CheckEntry::le("gaussianize.d_identity", "d_θ = ½Γα_θ", self.d_identity_residual(), 1e-8, 0.0));
        let dfro = self.delta.norm();
        out.push(CheckEntry::le("gaussianize.delta_frob", "‖Δ_θ‖_F ≤ γ_n", dfro, gamma_n, 1e-10 * gamma_n));
        let sp = spectral_norm(&self.delta);
        let budget = basis.sp_budget();
        out.push(CheckEntry::le(
            "gaussianize.delta_sp",
            "‖Δ_θ‖²_sp ≤ γ_n²·Σ‖M_k‖²_sp",
            sp * sp,
            gamma_n * gamma_n * budget,
            1e-10,
        ));
        let lhs = self.neumann_lhs().unwrap_or(f64::NAN);
        let rhs = neumann_bound(gamma_n, C_EIG * rho, budget);
        out.push(CheckEntry::le("gaussianize.neumann", "Σ_k {γ/(cρ)}^{k+1}(Σ‖M_j‖²_sp)^{k/2}", lhs, rhs, 1e-10));
        let min_g = SymEig::new(&self.summaries.gamma).min();
        let bound = 2.0 / self.c_eig.1.powi(2);
        out.push(CheckEntry::le("gaussianize.gamma_lower", "λ_min(Γ) ≥ 2‖C‖_sp^{-2}", bound, min_g, 1e-10 * bound));
        out
    }

    /// ‖C_θ^{-1/2}(B_θ^{-1} − C_θ)C_θ^{-1/2}‖_F
    pub fn neumann_lhs(&self) -> Result<f64> {
        let cte = SymEig::new(&self.c_theta);
        let is = cte.inv_sqrt()?;
        let binv = SymEig::new(&self.b_theta).inv()?;
        Ok((&is * (binv - &self.c_theta) * &is).norm())
    }

    /// T_k = xᵀC^{-1}M_kC^{-1}x
    pub fn sufficient_t(&self, x: &DVector<f64>, basis: &BasisSystem) -> Result<DVector<f64>> {
        sufficient_t(x, &self.c_inv, basis)
    }
}

/// Σ_{k≥1} (γ/(cρ))^{k+1}·s^k with s = (Σ‖M_j‖²_sp)^{1/2}; infinite when the series diverges.
pub fn neumann_bound(gamma: f64, c_rho: f64, sp_budget: f64) -> f64 {
    let a = gamma / c_rho;
    let q = a * sp_budget.sqrt();
    if q >= 1.0 {
        f64::INFINITY
    } else {
        a * q / (1.0 - q)
    }
}

pub fn sufficient_t(x: &DVector<f64>, c_inv: &DMatrix<f64>, basis: &BasisSystem) -> Result<DVector<f64>> {
    if x.len() != basis.n {
        return Err(Error::Dimension { expected: basis.n, got: x.len() });
    }
    let y = c_inv * x;
    Ok(DVector::from_iterator(basis.k(), basis.m.iter().map(|m| m.quad_form(&y))))
}

/// GOE: symmetric, N(0,1) above the diagonal, N(0,2) on it.
pub fn goe_sample(n: usize, rng: &mut Stream) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        g[(i, i)] = { let z: f64 = StandardNormal.sample(rng); std::f64::consts::SQRT_2 * z };
        for j in 0..i {
            let v: f64 = StandardNormal.sample(rng);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    A,
    B,
    D,
    G,
    H,
    I,
    J,
    K,
    L,
}

#[derive(Clone, Debug)]
pub enum Observation {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

impl Observation {
    pub fn vector(self) -> Option<DVector<f64>> {
        match self {
            Observation::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn matrix(self) -> Option<DMatrix<f64>> {
        match self {
            Observation::Matrix(m) => Some(m),
            _ => None,
        }
    }
}

/// Precomputed sampler for one experiment of the chain.
pub struct ExperimentSampler {
    model: Model,
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    post: Option<DMatrix<f64>>,
    shift: Option<DMatrix<f64>>,
}

impl ExperimentSampler {
    pub fn new(state: &ExperimentState, model: Model) -> Result<Self> {
        let s = &state.summaries;
        let k = state.k;
        let n = state.n;
        let gaussian = |mean: DVector<f64>, cov: &DMatrix<f64>| -> Result<ExperimentSampler> {
            Ok(ExperimentSampler { model, mean, chol: cholesky(cov)?, post: None, shift: None })
        };
        match model {
            Model::A => gaussian(DVector::zeros(n), &state.theta),
            Model::B => gaussian(DVector::zeros(n), &state.c_theta),
            Model::D => gaussian(DVector::zeros(n), &SymEig::new(&state.b_theta).inv()?),
            Model::G => gaussian(s.d_theta.clone(), &s.gamma_theta),
            Model::H => gaussian(&s.gamma * &state.alpha_theta * 0.5, &s.gamma),
            Model::I => {
                let mut h = gaussian(&s.gamma * &state.alpha_theta * 0.5, &s.gamma)?;
                h.model = Model::I;
                h.post = Some(SymEig::new(&s.gamma).inv()? * 2.0);
                Ok(h)
            }
            Model::L => gaussian(state.alpha_theta.clone(), &(SymEig::new(&s.gamma_tilde).inv()? * 4.0)),
            Model::J | Model::K => {
                let inner = if model == Model::J { &state.c_theta } else { &state.delta };
                let shift = &state.c_inv_sqrt * inner * &state.c_inv_sqrt;
                Ok(ExperimentSampler {
                    model,
                    mean: DVector::zeros(k),
                    chol: DMatrix::zeros(0, 0),
                    post: None,
                    shift: Some(symmetrize(&shift)),
                })
            }
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn draw(&self, rng: &mut Stream) -> Observation {
        if let Some(shift) = &self.shift {
            return Observation::Matrix(shift + goe_sample(shift.nrows(), rng));
        }
        let z = std_normal_vec(self.mean.len(), rng);
        let v = &self.mean + &self.chol * z;
        match &self.post {
            Some(p) => Observation::Vector(p * v),
            None => Observation::Vector(v),
        }
    }
}

pub fn experiment_sample(state: &ExperimentState, model: Model, rng: &mut Stream) -> Result<Observation> {
    Ok(ExperimentSampler::new(state, model)?.draw(rng))
}

/// {tr(C^{-1/2}M_kC^{-1/2}Ĉ)}_k for a J-observation Ĉ.
pub fn j_statistic(state: &ExperimentState, basis: &BasisSystem, obs: &DMatrix<f64>) -> DVector<f64> {
    let w = &state.c_inv_sqrt * obs * &state.c_inv_sqrt;
    DVector::from_iterator(basis.k(), basis.m.iter().map(|m| m.frob_inner_dense(&w)))
}

/// ‖A^{1/2}(A^{-1}−B^{-1})A^{1/2}‖_F ≤ ‖A^{-1/2}(B−A)A^{-1/2}‖_F/(1 − ‖A^{-1/2}(B−A)A^{-1/2}‖_sp).
pub fn sp_perturbation_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CheckEntry> {
    let id = "gaussianize.sp_perturbation";
    let pref = "matrix inverse perturbation bound";
    let ae = SymEig::new(a);
    let ais = ae.inv_sqrt()?;
    let asq = ae.sqrt()?;
    let x = symmetrize(&(&ais * (b - a) * &ais));
    let sp = SymEig::new(&x).abs_max();
    if sp >= 1.0 {
        return Ok(CheckEntry::skipped(id, pref, format!("precondition ‖A^-1/2(B−A)A^-1/2‖_sp = {sp} ≥ 1")));
    }
    let bi = SymEig::new(b).inv()?;
    let lhs = (&asq * (ae.inv()? - bi) * &asq).norm();
    let rhs = x.norm() / (1.0 - sp);
    Ok(CheckEntry::le(id, pref, lhs, rhs, 1e-12 * rhs.max(1.0)))
}

/// Default ρ for a class parameter ρ*.
pub fn rho(rho_star: f64) -> f64 {
    rho_for(rho_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis_cov::{build_basis, build_theta};
    use crate::rng::stream;
    use crate::spectral::{BasisIndex, ClassParams, SpectralDensity};

    fn density() -> SpectralDensity {
        SpectralDensity::constant(ClassParams::new(11.0, 5.0, 0.5).unwrap(), 1.0)
            .with(BasisIndex::plus(1, 0), 0.2)
            .with(BasisIndex::plus(0, 1), 0.3)
            .with(BasisIndex::minus(1, 1), 0.02)
    }

    #[test]
    fn schedule_values() {
        let s = Schedule::default();
        assert_eq!(s.k_target(1024), 2);
        assert_eq!(s.kappa(1024), 1);
        assert_eq!(s.k(1024), 6);
        assert!((s.gamma(1024) - 6.0 * (1024.0 + E * E).ln().ln()).abs() < 1e-12);
        assert!((s.beta2(64) - 6f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn truncated_noise_norm_and_acceptance() {
        let mut rng = stream(11, 0);
        let cfg = LocalizationConfig { beta: 1.0, gamma: 2.0 * 3f64.sqrt(), seed: 11 };
        // γ² = 4Kβ² with K = 3
        let mut accepted = 0usize;
        let trials = 20000;
        for _ in 0..trials {
            if (std_normal_vec(3, &mut rng) * cfg.beta).norm() <= cfg.gamma {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / trials as f64;
        assert!(rate >= 0.75);
        assert!((rate - cfg.acceptance(3)).abs() < 0.01);
        for _ in 0..200 {
            assert!(sample_truncated_noise(&cfg, 3, &mut rng).unwrap().norm() <= cfg.gamma);
        }
        let inf = LocalizationConfig { beta: 1.0, gamma: f64::INFINITY, seed: 0 };
        assert_eq!(inf.acceptance(5), 1.0);
        let bad = LocalizationConfig { beta: 10.0, gamma: 0.01, seed: 0 };
        assert!(matches!(sample_truncated_noise(&bad, 5, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn pilot_alpha_unit_vector() {
        let b = build_basis(16, 1, 1).unwrap();
        let mut x = DVector::zeros(16);
        x[0] = 1.0;
        let a = pilot_alpha(&x, &b).unwrap();
        assert!((a[0] - 0.25).abs() < 1e-15);
        assert!(pilot_alpha(&DVector::zeros(3), &b).is_err());
    }

    #[test]
    fn zero_noise_state() {
        let n = 64;
        let b = build_basis(n, 1, 1).unwrap();
        let theta = build_theta(&density(), n).unwrap().entries;
        let st = ExperimentState::build(&theta, &b, &DVector::zeros(b.k())).unwrap();
        assert_eq!(st.delta.norm(), 0.0);
        assert!((&st.c - &st.c_theta).norm() == 0.0);
        let cti = SymEig::new(&st.c_theta).inv().unwrap();
        assert!((&st.b_theta - cti).norm() < 1e-12);
        assert!(st.d_identity_residual() < 1e-10);
    }

    #[test]
    fn identity_summaries() {
        let n = 8;
        let b = build_basis(n, 1, 0).unwrap();
        let i = DMatrix::identity(n, n);
        let s = gaussian_summaries(&i, &i, &b).unwrap();
        let two = DMatrix::identity(b.k(), b.k()) * 2.0;
        assert!((&s.gamma - &two).norm() < 1e-12);
        assert!((&s.gamma_theta - &two).norm() < 1e-12);
        assert!((&s.gamma_tilde - &two).norm() < 1e-12);
        for (k, m) in b.m.iter().enumerate() {
            assert!((s.d_theta[k] - m.trace()).abs() < 1e-12);
        }
    }

    #[test]
    fn t_for_identity() {
        let b = build_basis(16, 1, 1).unwrap();
        let mut rng = stream(1, 1);
        let x = std_normal_vec(16, &mut rng);
        let t = sufficient_t(&x, &DMatrix::identity(16, 16), &b).unwrap();
        assert!((t[0] - x.norm_squared() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn localized_state_checks() {
        let n = 64;
        let b = build_basis(n, 1, 1).unwrap();
        let theta = build_theta(&density(), n).unwrap().entries;
        let cfg = LocalizationConfig { beta: 0.3, gamma: 1.0, seed: 5 };
        let mut rng = stream(5, 0);
        let eta = sample_truncated_noise(&cfg, b.k(), &mut rng).unwrap();
        let st = ExperimentState::build(&theta, &b, &eta).unwrap();
        for c in st.checks(&b, cfg.gamma, rho(0.5)) {
            assert!(c.pass, "{c:?}");
        }
        assert!(st.d_identity_residual() < 1e-8);
    }

    #[test]
    fn sufficiency_factorization_affine_in_t() {
        let n = 32;
        let b = build_basis(n, 1, 1).unwrap();
        let theta = build_theta(&density(), n).unwrap().entries;
        let eta = DVector::from_fn(b.k(), |i, _| 0.1 * (i as f64 - 2.0));
        let st = ExperimentState::build(&theta, &b, &eta).unwrap();
        let mut rng = stream(9, 0);
        let bdet = SymEig::new(&st.b_theta).values.iter().map(|v| v.ln()).sum::<f64>();
        let cdet = SymEig::new(&st.c).values.iter().map(|v| v.ln()).sum::<f64>();
        for _ in 0..20 {
            let x = std_normal_vec(n, &mut rng) * 3.0;
            let lb = 0.5 * bdet - 0.5 * x.dot(&(&st.b_theta * &x));
            let lc = -0.5 * cdet - 0.5 * x.dot(&(&st.c_inv * &x));
            let t = st.sufficient_t(&x, &b).unwrap();
            let affine = 0.5 * (bdet + cdet) - 0.5 * eta.dot(&t);
            assert!(((lb - lc) - affine).abs() < 1e-8 * (1.0 + affine.abs()));
        }
    }

    #[test]
    fn goe_symmetric() {
        let g = goe_sample(6, &mut stream(2, 0));
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn sp_perturbation_examples() {
        let a = DMatrix::identity(5, 5);
        let e = sp_perturbation_check(&a, &a).unwrap();
        assert!(e.pass && e.lhs == 0.0);
        let b = &a * 1.1;
        let e = sp_perturbation_check(&a, &b).unwrap();
        assert!((e.lhs - 5f64.sqrt() * 0.1 / 1.1).abs() < 1e-12);
        assert!((e.rhs - 5f64.sqrt() * 0.1 / 0.9).abs() < 1e-12);
        assert!(e.pass);
        let far = &a * 3.0;
        assert!(sp_perturbation_check(&a, &far).unwrap().note.is_some());
    }

    #[test]
    fn neumann_bound_series() {
        assert!(neumann_bound(1.0, 0.5, 1.0).is_infinite());
        let v = neumann_bound(0.1, 1.0, 0.25);
        let direct: f64 = (1..200).map(|k| 0.1f64.powi(k + 1) * 0.5f64.powi(k)).sum();
        assert!((v - direct).abs() < 1e-15);
    }
}
