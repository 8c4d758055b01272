//! Circulant-type matrices M̌_{0,j,j'} = Λ^j M̌^{j'} and the isometry Ψ onto the φ̃ system.
//!
//! Elements are coefficient tables over (j, j'); products use
//! M̌_{0,j₁,j₁'}·M̌_{0,j₂,j₂'} = λ(j₁'j₂)·M̌_{0,j₁+j₂,j₁'+j₂'} and never touch dense storage.
//! Dense matrices exist for oracles and for the real basis {M̌_k}.

use crate::error::{Error, Result};
use crate::sparse::Banded;
use crate::spectral::{enumerate, BasisIndex};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const MAX_DENSE_N: usize = 4096;
pub const REAL_CAST_TOL: f64 = 1e-10;

/// λ(x) = exp(2πix/n); x may be fractional.
pub fn lambda(n: usize, x: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * x / n as f64)
}

/// Representative of `j mod n` in (−n/2, n/2].
pub fn canon(j: i64, n: usize) -> i64 {
    let n = n as i64;
    let mut r = j.rem_euclid(n);
    if 2 * r > n {
        r -= n;
    }
    r
}

fn check_dense(n: usize) -> Result<()> {
    if !(2..=MAX_DENSE_N).contains(&n) {
        return Err(Error::Precondition(format!("dense size n = {n} outside [2, {MAX_DENSE_N}]")));
    }
    Ok(())
}

/// Dense Λ^j M̌^{j'}: entry (r, r + j' mod n) equals λ(j·r).
pub fn cm(n: usize, j: i64, j2: i64) -> Result<DMatrix<Complex64>> {
    check_dense(n)?;
    let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for r in 0..n {
        let c = (r as i64 + j2).rem_euclid(n as i64) as usize;
        m[(r, c)] = lambda(n, (j.rem_euclid(n as i64) * r as i64 % n as i64) as f64);
    }
    Ok(m)
}

/// Fourier vector v_k with entries λ(k·r).
pub fn fourier_vector(n: usize, k: i64) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_fn(n, |r, _| lambda(n, (k * r as i64).rem_euclid(n as i64) as f64))
}

/// Σ a_{j,j'} M̌_{0,j,j'} with indices kept in canonical form.
#[derive(Clone, Debug, PartialEq)]
pub struct CirculantElement {
    pub n: usize,
    pub coeffs: BTreeMap<(i64, i64), Complex64>,
}

impl CirculantElement {
    pub fn zero(n: usize) -> Self {
        CirculantElement { n, coeffs: BTreeMap::new() }
    }

    pub fn basis(n: usize, j: i64, j2: i64) -> Self {
        Self::zero(n).with(j, j2, Complex64::new(1.0, 0.0))
    }

    pub fn from_coeffs(n: usize, coeffs: impl IntoIterator<Item = ((i64, i64), Complex64)>) -> Self {
        let mut e = Self::zero(n);
        for ((j, j2), v) in coeffs {
            e = e.with(j, j2, v);
        }
        e
    }

    pub fn with(mut self, j: i64, j2: i64, v: Complex64) -> Self {
        let key = (canon(j, self.n), canon(j2, self.n));
        *self.coeffs.entry(key).or_default() += v;
        self
    }

    /// (max |j|, max |j'|) over nonzero coefficients.
    pub fn support(&self) -> (u32, u32) {
        self.coeffs
            .iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .fold((0, 0), |(a, b), ((j, k), _)| (a.max(j.unsigned_abs() as u32), b.max(k.unsigned_abs() as u32)))
    }

    pub fn frob_sq(&self) -> f64 {
        self.n as f64 * self.coeffs.values().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// ⟨A, B⟩_F = tr(A B^H) = n Σ a·conj(b).
    pub fn frob_inner(&self, other: &CirculantElement) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for (k, a) in &self.coeffs {
            if let Some(b) = other.coeffs.get(k) {
                s += a * b.conj();
            }
        }
        s * self.n as f64
    }

    pub fn scale(&self, s: Complex64) -> Self {
        CirculantElement { n: self.n, coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * s)).collect() }
    }

    pub fn add(&self, other: &CirculantElement) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            *out.coeffs.entry(*k).or_default() += v;
        }
        out
    }

    pub fn sub(&self, other: &CirculantElement) -> Self {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Exact product through the λ-phase rule.
    pub fn mul(&self, other: &CirculantElement) -> Self {
        let n = self.n;
        let mut out = Self::zero(n);
        for (&(j1, k1), a) in &self.coeffs {
            for (&(j2, k2), b) in &other.coeffs {
                let phase = lambda(n, (k1 * j2).rem_euclid(n as i64) as f64);
                out = out.with(j1 + j2, k1 + k2, a * b * phase);
            }
        }
        out
    }

    /// Conjugate transpose: (Λ^jM̌^{j'})^H = λ(jj')·Λ^{−j}M̌^{−j'}.
    pub fn adjoint(&self) -> Self {
        let mut out = Self::zero(self.n);
        for (&(j, k), a) in &self.coeffs {
            out = out.with(-j, -k, a.conj() * lambda(self.n, (j * k).rem_euclid(self.n as i64) as f64));
        }
        out
    }

    pub fn materialize(&self) -> Result<DMatrix<Complex64>> {
        check_dense(self.n)?;
        let n = self.n;
        let mut m = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for (&(j, k), a) in &self.coeffs {
            for r in 0..n {
                let c = (r as i64 + k).rem_euclid(n as i64) as usize;
                m[(r, c)] += a * lambda(n, (j * r as i64).rem_euclid(n as i64) as f64);
            }
        }
        Ok(m)
    }

    /// Largest imaginary part over all entries.
    pub fn max_imag(&self) -> f64 {
        let (re, im) = self.entries();
        let _ = re;
        im.values().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs()))
    }

    fn entries(&self) -> (Banded, BTreeMap<isize, Vec<f64>>) {
        let n = self.n;
        let mut re = Banded::zeros(n);
        let mut im = Banded::zeros(n);
        for (&(j, k), a) in &self.coeffs {
            for r in 0..n {
                let c = (r as i64 + k).rem_euclid(n as i64) as usize;
                let v = a * lambda(n, (j * r as i64).rem_euclid(n as i64) as f64);
                re.add_entry(r, c, v.re);
                im.add_entry(r, c, v.im);
            }
        }
        (re, im.diags)
    }

    /// Real banded form; any imaginary part above `REAL_CAST_TOL` is an internal error.
    pub fn to_real(&self) -> Result<Banded> {
        let (re, im) = self.entries();
        let worst = im.values().flat_map(|v| v.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
        if worst > REAL_CAST_TOL {
            return Err(Error::Internal(format!("circulant element is not real: max |imag| = {worst:e}")));
        }
        Ok(re)
    }
}

/// Finite combination Σ c_{a,b} φ̃_{a,b}.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigPoly {
    pub coeffs: BTreeMap<(i64, i64), Complex64>,
}

impl TrigPoly {
    pub fn from_phi(idx: &BasisIndex) -> Self {
        TrigPoly { coeffs: idx.exp_expansion().into_iter().collect() }
    }

    pub fn add_scaled(&mut self, other: &TrigPoly, s: Complex64) {
        for (k, v) in &other.coeffs {
            *self.coeffs.entry(*k).or_default() += v * s;
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        TrigPoly { coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * s)).collect() }
    }

    pub fn sub(&self, other: &TrigPoly) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, Complex64::new(-1.0, 0.0));
        out
    }

    /// Pointwise product: plain convolution of the coefficient tables.
    pub fn mul(&self, other: &TrigPoly) -> Self {
        let mut out = TrigPoly::default();
        for (&(a1, b1), x) in &self.coeffs {
            for (&(a2, b2), y) in &other.coeffs {
                *out.coeffs.entry((a1 + a2, b1 + b2)).or_default() += x * y;
            }
        }
        out
    }

    /// ‖g‖²_{L₂ⁿ} with ⟨f,g⟩ = (n/2π)∫∫ f·conj(g); each φ̃ has squared norm n.
    pub fn l2n_norm_sq(&self, n: usize) -> f64 {
        n as f64 * self.coeffs.values().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn support(&self) -> (u32, u32) {
        self.coeffs
            .iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .fold((0, 0), |(a, b), ((j, k), _)| (a.max(j.unsigned_abs() as u32), b.max(k.unsigned_abs() as u32)))
    }

    pub fn eval(&self, t: f64, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(&(a, b), c)| c * Complex64::from_polar(1.0, 2.0 * PI * a as f64 * t + b as f64 * x))
            .sum()
    }
}

/// Ψ restricted to M(m·κ₁, m·κ₂); `multiplier` records whether it serves pairs (2) or triples (3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsiMap {
    pub n: usize,
    pub kappa1: u32,
    pub kappa2: u32,
    pub multiplier: u32,
}

impl PsiMap {
    /// Requires m·κ_ℓ ≤ ⌊(n−1)/2⌋ so distinct (j,j') stay distinct mod n.
    pub fn new(n: usize, kappa1: u32, kappa2: u32, multiplier: u32) -> Result<Self> {
        let half = ((n.saturating_sub(1)) / 2) as u32;
        if multiplier * kappa1 > half || multiplier * kappa2 > half {
            return Err(Error::Precondition(format!(
                "Ψ domain multiplier {multiplier} with κ = ({kappa1}, {kappa2}) exceeds ⌊(n−1)/2⌋ = {half}"
            )));
        }
        Ok(PsiMap { n, kappa1, kappa2, multiplier })
    }

    fn in_range(&self, j: i64, k: i64) -> bool {
        j.unsigned_abs() as u32 <= self.multiplier * self.kappa1 && k.unsigned_abs() as u32 <= self.multiplier * self.kappa2
    }

    pub fn forward(&self, a: &CirculantElement) -> Result<TrigPoly> {
        if a.n != self.n {
            return Err(Error::Dimension { expected: self.n, got: a.n });
        }
        let mut out = TrigPoly::default();
        for (&(j, k), v) in &a.coeffs {
            if !self.in_range(j, k) {
                return Err(Error::Range(format!("M̌_0,{j},{k} outside the domain of Ψ")));
            }
            out.coeffs.insert((j, k), *v);
        }
        Ok(out)
    }

    pub fn inverse(&self, g: &TrigPoly) -> Result<CirculantElement> {
        let mut out = CirculantElement::zero(self.n);
        for (&(a, b), v) in &g.coeffs {
            if !self.in_range(a, b) {
                return Err(Error::Range(format!("φ̃_{a},{b} outside the range of Ψ")));
            }
            out = out.with(a, b, *v);
        }
        Ok(out)
    }
}

/// ‖Ψ(AB) − Ψ(A)Ψ(B)‖²_{L₂ⁿ}, computed in coefficient space.
pub fn hom_defect_lhs(a: &CirculantElement, b: &CirculantElement) -> f64 {
    let n = a.n;
    let mut diff: BTreeMap<(i64, i64), Complex64> = BTreeMap::new();
    for (&(j1, k1), x) in &a.coeffs {
        for (&(j2, k2), y) in &b.coeffs {
            let phase = lambda(n, (k1 * j2).rem_euclid(n as i64) as f64) - 1.0;
            *diff.entry((j1 + j2, k1 + k2)).or_default() += x * y * phase;
        }
    }
    n as f64 * diff.values().map(|v| v.norm_sqr()).sum::<f64>()
}

/// Homomorphism defect with Ψ = Ψ_{2κ₁,2κ₂}: returns (lhs, 4π²‖A‖²‖B‖²κ₁²κ₂²/n³).
pub fn hom_defect(a: &CirculantElement, b: &CirculantElement, kappa1: u32, kappa2: u32) -> Result<(f64, f64)> {
    if a.n != b.n {
        return Err(Error::Dimension { expected: a.n, got: b.n });
    }
    let n = a.n;
    let half = ((n - 1) / 2) as u32;
    if 2 * kappa1 >= half || 2 * kappa2 >= half {
        return Err(Error::Precondition(format!("κ = ({kappa1}, {kappa2}) requires κ < ⌊(n−1)/2⌋/2 = {}", half as f64 / 2.0)));
    }
    for e in [a, b] {
        let (s1, s2) = e.support();
        if s1 > kappa1 || s2 > kappa2 {
            return Err(Error::Range(format!("element support ({s1}, {s2}) exceeds κ = ({kappa1}, {kappa2})")));
        }
    }
    let psi = PsiMap::new(n, kappa1, kappa2, 2)?;
    // the product lies in the doubled domain; forward() enforces it
    let ab = psi.forward(&a.mul(b))?;
    let prod = psi.forward(a)?.mul(&psi.forward(b)?);
    let lhs = ab.sub(&prod).l2n_norm_sq(n);
    debug_assert!((lhs - hom_defect_lhs(a, b)).abs() <= 1e-9 * lhs.max(1e-300) + 1e-300);
    let k = (kappa1 as f64 * kappa2 as f64).powi(2);
    let bound = 4.0 * PI * PI * a.frob_sq() * b.frob_sq() * k / (n as f64).powi(3);
    Ok((lhs, bound))
}

/// Bound that follows from the same phase estimate with Young's inequality instead of the
/// entrywise Cauchy–Schwarz step: 4π²·(a₂b₁)²·S_A·‖A‖²‖B‖²/n³, S_A the support size of A.
pub fn hom_defect_bound_rigorous(a: &CirculantElement, b: &CirculantElement) -> f64 {
    let n = a.n as f64;
    let support = a.coeffs.values().filter(|v| v.norm() > 0.0).count() as f64;
    let a2 = a.support().1 as f64;
    let b1 = b.support().0 as f64;
    4.0 * PI * PI * (a2 * b1).powi(2) * support * a.frob_sq() * b.frob_sq() / n.powi(3)
}

/// Ψ⁻¹(φ^±_{j,j'}) with the literal φ̃ expansion (real, symmetric only when j·j' = 0).
pub fn psi_inverse_phi(n: usize, idx: &BasisIndex) -> CirculantElement {
    CirculantElement::from_coeffs(n, idx.exp_expansion())
}

/// M̌^±_{j,j'}·√(2π/n), with each M̌_{0,a,b} rephased by λ(ab/2) so the result is exactly real symmetric.
pub fn mcheck_element(n: usize, idx: &BasisIndex) -> CirculantElement {
    let s = (2.0 * PI / n as f64).sqrt();
    CirculantElement::from_coeffs(
        n,
        idx.exp_expansion().into_iter().map(|((a, b), w)| ((a, b), w * lambda(n, (a * b) as f64 / 2.0) * s)),
    )
}

/// Frobenius-orthonormal real symmetric family {M̌_k}.
#[derive(Clone, Debug)]
pub struct MCheckBasis {
    pub n: usize,
    pub kappa1: u32,
    pub kappa2: u32,
    pub indices: Vec<BasisIndex>,
    pub elements: Vec<CirculantElement>,
    pub matrices: Vec<Banded>,
}

impl MCheckBasis {
    pub fn k(&self) -> usize {
        self.indices.len()
    }
}

pub fn build_mcheck_basis(n: usize, kappa1: u32, kappa2: u32) -> Result<MCheckBasis> {
    let half = (n.saturating_sub(1) / 2) as u32;
    if 2 * kappa1 >= half || 2 * kappa2 >= half {
        return Err(Error::Precondition(format!("κ = ({kappa1}, {kappa2}) requires κ < ⌊(n−1)/2⌋/2 for n = {n}")));
    }
    let indices = enumerate(kappa1, kappa2);
    let mut elements = Vec::with_capacity(indices.len());
    let mut matrices = Vec::with_capacity(indices.len());
    for idx in &indices {
        let e = mcheck_element(n, idx);
        let mut m = e.to_real()?;
        if m.max_asymmetry() > REAL_CAST_TOL {
            return Err(Error::Internal(format!("M̌ for {idx:?} is not symmetric")));
        }
        m.mirror_upper();
        elements.push(e);
        matrices.push(m);
    }
    Ok(MCheckBasis { n, kappa1, kappa2, indices, elements, matrices })
}
