//! The `verify` suite: every inequality check at one n.

use super::conditions::piecing_check;
use super::config::RunConfig;
use super::divergences::gaussian_divergences;
use super::studies::study_grid;
use crate::basis_cov::{build_basis, build_theta, rho_for, theta_lipschitz_check};
use crate::circulant::{hom_defect, CirculantElement};
use crate::cltcheck::{CharFnContext, EdgeworthExpansion};
use crate::error::{Error, Result};
use crate::gaussianize::{sample_truncated_noise, sp_perturbation_check, std_normal_vec, ExperimentState};
use crate::report::{CheckEntry, VerificationReport};
use crate::rng::{stream, subseed, Stream};
use crate::spectral::BasisIndex;
use crate::whitenoise::{localized_drift, sufficient_y, GoeStudy, WhiteNoiseGeometry};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

fn suite(report: &mut VerificationReport, id: &str, f: impl FnOnce() -> Result<Vec<CheckEntry>>) {
    match f() {
        Ok(v) => report.extend(v),
        Err(Error::Localization(msg)) => report.push(CheckEntry::skipped(id, "localization precondition", msg)),
        Err(e) => report.push(CheckEntry::failed_with(id, "plumbing", e)),
    }
}

/// Gaussian coefficients on the box |j|, |j'| ≤ κ.
pub fn random_element(n: usize, kappa: u32, rng: &mut Stream) -> CirculantElement {
    let k = kappa as i64;
    let mut e = CirculantElement::zero(n);
    for j in -k..=k {
        for j2 in -k..=k {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            e = e.with(j, j2, Complex64::new(re, im));
        }
    }
    e
}

/// Random SPD matrix with eigenvalues in [0.5, 2.5].
pub fn random_spd(k: usize, rng: &mut Stream) -> DMatrix<f64> {
    let a: DMatrix<f64> = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    let q = a.qr().q();
    let d = DVector::from_fn(k, |_, _| {
        let u: f64 = StandardNormal.sample(rng);
        1.5 + u.tanh()
    });
    &q * DMatrix::from_diagonal(&d) * q.transpose()
}

pub fn verify(cfg: &RunConfig, n: usize) -> VerificationReport {
    let mut report = VerificationReport::new();
    let seed = subseed(cfg.seed, n as u64);
    let sch = cfg.schedule;
    let kappa = sch.kappa(n);
    let grid = study_grid();
    let f = match cfg.density() {
        Ok(f) => f,
        Err(e) => {
            report.push(CheckEntry::failed_with("verify.density", "plumbing", e));
            return report;
        }
    };
    let rho = rho_for(f.class.rho_star);

    report.extend(f.sobolev_check().entries);
    suite(&mut report, "basis", || Ok(build_basis(n, kappa, kappa)?.invariant_checks()));
    suite(&mut report, "theta", || {
        let mut v = build_theta(&f, n)?.eig_check(rho);
        let g = f.clone().with(BasisIndex::minus(1, 1), 0.02);
        v.extend(theta_lipschitz_check(&f, &g, n)?);
        Ok(v)
    });
    suite(&mut report, "circulant.hom_defect", || {
        let kap = kappa.min(((n - 1) / 2 / 2).saturating_sub(1) as u32).max(1);
        let mut rng = stream(seed, 1);
        let mut worst = 0.0f64;
        for _ in 0..20 {
            let a = random_element(n, kap, &mut rng);
            let b = random_element(n, kap, &mut rng);
            let (lhs, bound) = hom_defect(&a, &b, kap, kap)?;
            worst = worst.max(lhs / bound);
        }
        Ok(vec![CheckEntry::le("circulant.hom_defect", "‖Ψ(AB)−Ψ(A)Ψ(B)‖² ≤ 4π²‖A‖²‖B‖²κ₁²κ₂²/n³ (ratio)", worst, 1.0, 0.0)
            .with_note("20 random Gaussian pairs")])
    });
    suite(&mut report, "gaussianize", || {
        let basis = build_basis(n, kappa, kappa)?;
        let theta = build_theta(&f, n)?.entries;
        let loc = sch.localization(n, seed);
        let eta = sample_truncated_noise(&loc, basis.k(), &mut stream(seed, 2))?;
        let state = ExperimentState::build(&theta, &basis, &eta)?;
        let mut v = state.checks(&basis, loc.gamma, rho);
        let mut rng = stream(seed, 3);
        let a = random_spd(8, &mut rng);
        let b = &a + random_spd(8, &mut rng) * 0.05;
        v.push(sp_perturbation_check(&a, &b)?);
        Ok(v)
    });
    suite(&mut report, "cltcheck", || {
        let basis = build_basis(n, 0, 0)?;
        let theta = build_theta(&f, n)?.entries;
        let (_, ct) = crate::basis_cov::project_cov(&theta, &basis);
        let ctx = CharFnContext::new(&ct, &ct, &basis)?;
        let mut v = ctx.checks();
        let e = EdgeworthExpansion::build(&ctx, cfg.q)?;
        v.push(e.coefficient_check());
        let dirs = vec![vec![1.0], vec![-1.0]];
        v.push(e.remainder_check(&ctx, &dirs, &[0.1, 0.3, 0.5, 0.7, 0.9])?);
        v.push(ctx.fourier_tail_check(cfg.r, 1)?);
        v.push(piecing_check(sch.k(n), cfg.q, cfg.r));
        Ok(v)
    });
    suite(&mut report, "whitenoise", || {
        let basis = build_basis(n, kappa, kappa)?;
        let alpha = basis.coefficients(&build_theta(&f, n)?.entries);
        let loc = sch.localization(n, seed);
        let eta: Vec<f64> = sample_truncated_noise(&loc, basis.k(), &mut stream(seed, 4))?.iter().cloned().collect();
        let drift = localized_drift(&f, &alpha, &eta, &basis.indices, n, loc.gamma, &grid)?;
        let mut v = drift.checks();
        v.extend(sufficient_y(&alpha, &drift.f_hat, &basis.indices, &grid)?.checks());
        let geo = WhiteNoiseGeometry::build(&drift.f_hat, n, kappa, &grid)?;
        v.extend(geo.checks());
        v.push(CheckEntry::le(
            "wn.inv_sqrt_sup",
            "‖f̃^{-1/2}‖_∞ ≤ √(3/ρ*)",
            geo.proxy.sup_norm,
            (3.0 / f.class.rho_star).sqrt(),
            0.0,
        ));
        let goe = GoeStudy::new(&f, n, kappa, sch.localization(n, subseed(seed, 5)))?;
        v.extend(goe.replicate(&f, 0, &grid)?.checks());
        Ok(v)
    });
    suite(&mut report, "harness.divergences", || {
        let mut rng = stream(seed, 6);
        let mut worst_h = f64::NEG_INFINITY;
        for _ in 0..10 {
            let m1 = std_normal_vec(3, &mut rng);
            let m2 = std_normal_vec(3, &mut rng);
            let d = gaussian_divergences(&m1, &random_spd(3, &mut rng), &m2, &random_spd(3, &mut rng))?;
            worst_h = worst_h.max(d.hellinger2 - d.kl);
        }
        Ok(vec![CheckEntry::le("harness.hellinger_kl", "H² ≤ KL (max H² − KL)", worst_h, 0.0, 1e-12)])
    });
    report
}
