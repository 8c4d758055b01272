use lsp_equiv::basis_cov::{build_basis, build_theta};
use lsp_equiv::circulant::{hom_defect, CirculantElement};
use lsp_equiv::cltcheck::CharFnContext;
use lsp_equiv::gaussianize::sp_perturbation_check;
use lsp_equiv::harness::gaussian_divergences;
use lsp_equiv::harness::verify::{random_element, random_spd};
use lsp_equiv::report::fmt17;
use lsp_equiv::rng::stream;
use lsp_equiv::spectral::{enumerate, BasisIndex, ClassParams, SpectralDensity};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::RngCore;

fn class() -> ClassParams {
    ClassParams::new(11.0, 5.0, 0.5).unwrap()
}

fn element(n: usize, coeffs: &[(i64, i64, f64, f64)]) -> CirculantElement {
    CirculantElement::from_coeffs(n, coeffs.iter().map(|&(j, k, re, im)| ((j, k), Complex64::new(re, im))))
}

fn coeff_strategy() -> impl Strategy<Value = Vec<(i64, i64, f64, f64)>> {
    prop::collection::vec((-2i64..=2, -2i64..=2, -1.0..1.0f64, -1.0..1.0f64), 1..6)
}

fn cmax(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.norm()))
}

fn density_strategy() -> impl Strategy<Value = SpectralDensity> {
    (0.8..1.2f64, prop::collection::vec(-0.02..0.02f64, 5)).prop_map(|(level, c)| {
        let idx = enumerate(1, 1);
        let mut f = SpectralDensity::constant(class(), level);
        for (k, v) in idx[1..].iter().zip(c) {
            f = f.with(*k, v);
        }
        f
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn circulant_product_matches_dense(a in coeff_strategy(), b in coeff_strategy()) {
        let n = 16;
        let (a, b) = (element(n, &a), element(n, &b));
        let dense = a.materialize().unwrap() * b.materialize().unwrap();
        prop_assert!(cmax(&(a.mul(&b).materialize().unwrap() - dense)) < 1e-12);
    }

    #[test]
    fn circulant_adjoint_and_inner_match_dense(a in coeff_strategy(), b in coeff_strategy()) {
        let n = 16;
        let (a, b) = (element(n, &a), element(n, &b));
        let (da, db) = (a.materialize().unwrap(), b.materialize().unwrap());
        prop_assert!(cmax(&(a.adjoint().materialize().unwrap() - da.adjoint())) < 1e-12);
        let ip: Complex64 = da.iter().zip(db.iter()).map(|(x, y)| x * y.conj()).sum();
        prop_assert!((a.frob_inner(&b) - ip).norm() < 1e-10);
        prop_assert!((a.frob_sq() - da.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn hom_defect_within_bound_for_gaussian_pairs(seed in any::<u64>(), n in prop::sample::select(vec![32usize, 64, 128]), kap in 1u32..=3) {
        let mut rng = stream(seed, 0);
        let a = random_element(n, kap, &mut rng);
        let b = random_element(n, kap, &mut rng);
        let (lhs, bound) = hom_defect(&a, &b, kap, kap).unwrap();
        prop_assert!(lhs <= bound, "{lhs} > {bound}");
    }

    #[test]
    fn basis_coefficients_invert_combine(c in prop::collection::vec(-3.0..3.0f64, 6), n in prop::sample::select(vec![32usize, 64])) {
        let b = build_basis(n, 1, 1).unwrap();
        let back = b.coefficients(&b.combine(&c));
        for (x, y) in back.iter().zip(&c) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_is_linear_and_symmetric(f in density_strategy(), g in density_strategy(), a in -2.0..2.0f64) {
        let n = 24;
        let lhs = build_theta(&f.scale(a).add(&g), n).unwrap().entries;
        let rhs = build_theta(&f, n).unwrap().entries * a + build_theta(&g, n).unwrap().entries;
        prop_assert!((&lhs - rhs).amax() < 1e-12);
        prop_assert!((&lhs - lhs.transpose()).amax() == 0.0);
    }

    #[test]
    fn density_json_roundtrip(f in density_strategy()) {
        let back = SpectralDensity::from_json(&f.to_json()).unwrap();
        for k in enumerate(1, 1) {
            prop_assert_eq!(back.coeff(&k), f.coeff(&k));
        }
    }

    #[test]
    fn fmt17_roundtrips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn streams_reproducible(seed in any::<u64>(), i in any::<u64>()) {
        prop_assert_eq!(stream(seed, i).next_u64(), stream(seed, i).next_u64());
    }

    #[test]
    fn divergence_orderings(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = stream(seed, 0);
        let m1 = DVector::from_fn(k, |_, _| rng.next_u32() as f64 / u32::MAX as f64);
        let m2 = DVector::from_fn(k, |_, _| rng.next_u32() as f64 / u32::MAX as f64);
        let c1 = random_spd(k, &mut rng);
        let c2 = random_spd(k, &mut rng);
        let d = gaussian_divergences(&m1, &c1, &m2, &c2).unwrap();
        prop_assert!(d.kl >= 0.0);
        prop_assert!(d.hellinger2 >= 0.0 && d.hellinger2 <= 1.0);
        prop_assert!(d.hellinger2 <= d.kl + 1e-12);
        prop_assert!(d.tv_upper >= 0.0 && d.tv_upper <= 1.0);
    }

    #[test]
    fn char_fn_hermitian_and_bounded(t in -20.0..20.0f64) {
        let n = 32;
        let b = build_basis(n, 0, 0).unwrap();
        let i = DMatrix::identity(n, n);
        let ctx = CharFnContext::new(&i, &i, &b).unwrap();
        let p = ctx.char_fn(&[t]).unwrap();
        let m = ctx.char_fn(&[-t]).unwrap();
        prop_assert!((p - m.conj()).norm() < 1e-12);
        prop_assert!(p.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn sp_perturbation_holds(seed in any::<u64>(), k in 2usize..8, eps in 0.01..0.2f64) {
        let mut rng = stream(seed, 0);
        let a = random_spd(k, &mut rng);
        let b = &a + random_spd(k, &mut rng) * eps;
        let c = sp_perturbation_check(&a, &b).unwrap();
        prop_assert!(c.pass, "{c:?}");
    }
}

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    (-(x - m).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn bretagnolle_huber_dominates_quadrature_tv() {
    let mut rng = stream(41, 0);
    for _ in 0..100 {
        let mut u = || rng.next_u32() as f64 / u32::MAX as f64;
        let (m1, m2) = (4.0 * u() - 2.0, 4.0 * u() - 2.0);
        let (s1, s2) = (0.3 + 2.0 * u(), 0.3 + 2.0 * u());
        let d = gaussian_divergences(
            &DVector::from_element(1, m1),
            &DMatrix::from_element(1, 1, s1 * s1),
            &DVector::from_element(1, m2),
            &DMatrix::from_element(1, 1, s2 * s2),
        )
        .unwrap();
        // ½∫|p − q| by the trapezoid rule over ±14 standard deviations
        let lo = m1.min(m2) - 14.0 * s1.max(s2);
        let hi = m1.max(m2) + 14.0 * s1.max(s2);
        let steps = 200_000;
        let h = (hi - lo) / steps as f64;
        let tv = 0.5
            * h
            * (0..=steps)
                .map(|i| {
                    let x = lo + i as f64 * h;
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    w * (normal_pdf(x, m1, s1) - normal_pdf(x, m2, s2)).abs()
                })
                .sum::<f64>();
        assert!(d.tv_upper >= tv - 1e-8, "{m1} {s1} {m2} {s2}: {} < {tv}", d.tv_upper);
        // closed-form KL for the univariate case
        let kl = (s2 / s1).ln() + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2) - 0.5;
        assert!((d.kl - kl).abs() < 1e-12 * kl.max(1.0));
    }
}

#[test]
fn plus_zero_zero_is_the_constant_direction() {
    let f = SpectralDensity::new(class()).with(BasisIndex::plus(0, 0), (2.0 * std::f64::consts::PI).sqrt());
    let (lo, hi) = f.grid_range(33);
    assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
}
