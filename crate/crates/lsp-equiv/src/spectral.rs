//! Time-varying spectral densities on [0,1]×[−π,π] in the real φ^± system.
//!
//! φ⁺_{j,j'}(t,x) = c·cos(j'x)·cos(2πjt) and φ⁻_{j,j'}(t,x) = c·cos(j'x)·sin(2πjt) (j ≥ 1),
//! with c ∈ {√(2/π), √(1/π), √(1/(2π))} depending on which frequencies vanish.
//! Each φ is also a finite combination of φ̃_{a,b}(t,x) = exp(2πiat + ibx); `exp_expansion`
//! returns that combination and is the bridge to the circulant and covariance modules.

use crate::error::{Error, Result};
use crate::quad::{uniform_points, Grid2};
use crate::report::CheckEntry;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisIndex {
    pub parity: Parity,
    pub j: u32,
    pub j2: u32,
}

impl BasisIndex {
    pub fn new(parity: Parity, j: u32, j2: u32) -> Result<Self> {
        if parity == Parity::Minus && j == 0 {
            return Err(Error::Domain("φ⁻ requires j ≥ 1".into()));
        }
        Ok(BasisIndex { parity, j, j2 })
    }

    pub fn plus(j: u32, j2: u32) -> Self {
        BasisIndex { parity: Parity::Plus, j, j2 }
    }

    pub fn minus(j: u32, j2: u32) -> Self {
        assert!(j >= 1, "φ⁻ requires j ≥ 1");
        BasisIndex { parity: Parity::Minus, j, j2 }
    }

    pub fn norm_const(&self) -> f64 {
        match (self.parity, self.j == 0, self.j2 == 0) {
            (Parity::Plus, false, false) | (Parity::Minus, _, false) => (2.0 / PI).sqrt(),
            (Parity::Plus, true, true) => (1.0 / (2.0 * PI)).sqrt(),
            _ => (1.0 / PI).sqrt(),
        }
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        let a = 2.0 * PI * self.j as f64 * t;
        match self.parity {
            Parity::Plus => a.cos(),
            Parity::Minus => a.sin(),
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.norm_const() * self.time_factor(t) * (self.j2 as f64 * x).cos()
    }

    /// (j² + j'²)^s weight of the Sobolev ellipsoid.
    pub fn sobolev_weight(&self, s: f64) -> f64 {
        let r2 = (self.j as f64).powi(2) + (self.j2 as f64).powi(2);
        if r2 == 0.0 {
            0.0
        } else {
            r2.powf(s)
        }
    }

    /// Coefficients w with φ = Σ w_{a,b} φ̃_{a,b}; duplicate (a,b) pairs are merged.
    pub fn exp_expansion(&self) -> Vec<((i64, i64), Complex64)> {
        let c = self.norm_const();
        let j = self.j as i64;
        let k = self.j2 as i64;
        let terms: [((i64, i64), Complex64); 4] = match self.parity {
            Parity::Plus => {
                let w = Complex64::new(c / 4.0, 0.0);
                [((j, k), w), ((-j, k), w), ((j, -k), w), ((-j, -k), w)]
            }
            Parity::Minus => {
                // c/(4i) = −ic/4
                let w = Complex64::new(0.0, -c / 4.0);
                [((j, k), w), ((-j, k), -w), ((j, -k), w), ((-j, -k), -w)]
            }
        };
        let mut out: Vec<((i64, i64), Complex64)> = Vec::with_capacity(4);
        for (ab, w) in terms {
            match out.iter_mut().find(|(e, _)| *e == ab) {
                Some(slot) => slot.1 += w,
                None => out.push((ab, w)),
            }
        }
        out.retain(|(_, w)| w.norm() > 0.0);
        out
    }
}

/// Indices of the (κ₁,κ₂) block: all φ⁺ (j ≤ κ₁, j' ≤ κ₂) then all φ⁻ (1 ≤ j ≤ κ₁), j outer.
pub fn enumerate(kappa1: u32, kappa2: u32) -> Vec<BasisIndex> {
    let mut v = Vec::with_capacity(((2 * kappa1 + 1) * (kappa2 + 1)) as usize);
    for j in 0..=kappa1 {
        for j2 in 0..=kappa2 {
            v.push(BasisIndex::plus(j, j2));
        }
    }
    for j in 1..=kappa1 {
        for j2 in 0..=kappa2 {
            v.push(BasisIndex::minus(j, j2));
        }
    }
    v
}

pub fn block_size(kappa1: u32, kappa2: u32) -> usize {
    ((2 * kappa1 + 1) * (kappa2 + 1)) as usize
}

/// First `count` basis functions: the (κ₁,κ₂) block, then the new members of each
/// enlarged block (κ₁+m, κ₂+m), m = 1, 2, …, in block order.
pub fn enumerate_extended(kappa1: u32, kappa2: u32, count: usize) -> Vec<BasisIndex> {
    let mut out = enumerate(kappa1, kappa2);
    let mut seen: HashSet<BasisIndex> = out.iter().cloned().collect();
    let mut m = 1;
    while out.len() < count {
        for idx in enumerate(kappa1 + m, kappa2 + m) {
            if seen.insert(idx) {
                out.push(idx);
            }
        }
        m += 1;
    }
    out.truncate(count);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    pub s: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub rho_star: f64,
}

impl ClassParams {
    pub fn new(s: f64, l: f64, rho_star: f64) -> Result<Self> {
        if !(s > 0.0 && l > 0.0 && rho_star > 0.0 && rho_star < 1.0) {
            return Err(Error::Domain(format!("class parameters s={s}, L={l}, rho*={rho_star}")));
        }
        Ok(ClassParams { s, l, rho_star })
    }
}

impl Default for ClassParams {
    fn default() -> Self {
        ClassParams { s: 11.0, l: 5.0, rho_star: 0.5 }
    }
}

fn check_domain(t: f64, x: f64) -> Result<()> {
    const EPS: f64 = 1e-12;
    if !(-EPS..=1.0 + EPS).contains(&t) || !(-PI - EPS..=PI + EPS).contains(&x) {
        return Err(Error::Domain(format!("(t, x) = ({t}, {x}) outside [0,1]×[−π,π]")));
    }
    Ok(())
}

/// f = Σ f̃_k φ_k with class parameters attached.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDensity {
    pub coeffs: BTreeMap<BasisIndex, f64>,
    pub class: ClassParams,
}

impl SpectralDensity {
    pub fn new(class: ClassParams) -> Self {
        SpectralDensity { coeffs: BTreeMap::new(), class }
    }

    pub fn from_coeffs(class: ClassParams, coeffs: impl IntoIterator<Item = (BasisIndex, f64)>) -> Self {
        let mut f = Self::new(class);
        for (k, v) in coeffs {
            *f.coeffs.entry(k).or_insert(0.0) += v;
        }
        f
    }

    /// f ≡ level.
    pub fn constant(class: ClassParams, level: f64) -> Self {
        Self::from_coeffs(class, [(BasisIndex::plus(0, 0), level * (2.0 * PI).sqrt())])
    }

    pub fn with(mut self, idx: BasisIndex, value: f64) -> Self {
        *self.coeffs.entry(idx).or_insert(0.0) += value;
        self
    }

    pub fn coeff(&self, idx: &BasisIndex) -> f64 {
        self.coeffs.get(idx).cloned().unwrap_or(0.0)
    }

    pub fn max_freqs(&self) -> (u32, u32) {
        self.coeffs.keys().fold((0, 0), |(a, b), k| (a.max(k.j), b.max(k.j2)))
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        check_domain(t, x)?;
        Ok(self.eval_unchecked(t, x))
    }

    pub fn eval_unchecked(&self, t: f64, x: f64) -> f64 {
        self.coeffs.iter().map(|(k, v)| v * k.eval(t, x)).sum()
    }

    /// Values on the tensor product ts × xs (t-major), using cached trig tables.
    pub fn values_on(&self, ts: &[f64], xs: &[f64]) -> Vec<f64> {
        let (_, mj2) = self.max_freqs();
        let cosx: Vec<Vec<f64>> = (0..=mj2).map(|k| xs.iter().map(|x| (k as f64 * x).cos()).collect()).collect();
        // per-(t-row) collapse: g_t(k') = Σ_j coef·c·T_j(t)
        let mut out = Vec::with_capacity(ts.len() * xs.len());
        let mut g = vec![0.0; mj2 as usize + 1];
        for &t in ts {
            g.iter_mut().for_each(|v| *v = 0.0);
            for (k, v) in &self.coeffs {
                g[k.j2 as usize] += v * k.norm_const() * k.time_factor(t);
            }
            for (b, _) in xs.iter().enumerate() {
                let mut s = 0.0;
                for (k2, gv) in g.iter().enumerate() {
                    if *gv != 0.0 {
                        s += gv * cosx[k2][b];
                    }
                }
                out.push(s);
            }
        }
        out
    }

    pub fn on_grid(&self, grid: &Grid2) -> GridFunction {
        GridFunction { grid: grid.clone(), values: self.values_on(&grid.t, &grid.x) }
    }

    /// Keep j ≤ κ₁ and j' ≤ κ₂.
    pub fn project(&self, kappa1: u32, kappa2: u32) -> SpectralDensity {
        SpectralDensity {
            coeffs: self.coeffs.iter().filter(|(k, _)| k.j <= kappa1 && k.j2 <= kappa2).map(|(k, v)| (*k, *v)).collect(),
            class: self.class,
        }
    }

    /// Coefficient vector in a given enumeration.
    pub fn coeff_vector(&self, basis: &[BasisIndex]) -> Vec<f64> {
        basis.iter().map(|k| self.coeff(k)).collect()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.coeffs.values().map(|v| v * v).sum()
    }

    pub fn scale(&self, a: f64) -> SpectralDensity {
        SpectralDensity { coeffs: self.coeffs.iter().map(|(k, v)| (*k, a * v)).collect(), class: self.class }
    }

    pub fn add(&self, other: &SpectralDensity) -> SpectralDensity {
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            *out.coeffs.entry(*k).or_insert(0.0) += v;
        }
        out
    }

    pub fn sobolev_sum(&self) -> f64 {
        self.coeffs.iter().map(|(k, v)| v * v * k.sobolev_weight(self.class.s)).sum()
    }

    /// Min and max over the `m`×`m` uniform grid (endpoints included).
    pub fn grid_range(&self, m: usize) -> (f64, f64) {
        let v = self.values_on(&uniform_points(m, 0.0, 1.0), &uniform_points(m, -PI, PI));
        v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    }

    pub fn sup_abs(&self, m: usize) -> f64 {
        let (lo, hi) = self.grid_range(m);
        lo.abs().max(hi.abs())
    }

    pub fn sobolev_check(&self) -> ClassCheck {
        self.sobolev_check_on(256)
    }

    pub fn sobolev_check_on(&self, m: usize) -> ClassCheck {
        let c = self.class;
        let sum = self.sobolev_sum();
        let (lo, hi) = self.grid_range(m);
        let entries = vec![
            CheckEntry::le("spectral.sobolev_sum", "Sobolev ellipsoid W(s,L,rho*)", sum, c.l, 0.0),
            CheckEntry::le("spectral.lower_bound", "f >= rho* on grid", c.rho_star, lo, 0.0),
            CheckEntry::le("spectral.upper_bound", "f <= 1/rho* on grid", hi, 1.0 / c.rho_star, 0.0),
        ];
        let pass = entries.iter().all(|e| e.pass);
        ClassCheck { sobolev_sum: sum, grid_min: lo, grid_max: hi, pass, entries }
    }

    /// Table F with f = Σ F_{a,b} φ̃_{a,b}.
    pub fn exp_table(&self) -> HashMap<(i64, i64), Complex64> {
        let mut out = HashMap::new();
        for (k, v) in &self.coeffs {
            for (ab, w) in k.exp_expansion() {
                *out.entry(ab).or_insert(Complex64::new(0.0, 0.0)) += w * v;
            }
        }
        out
    }

    /// Inverse of `exp_table`: ⟨f, φ⟩ = 2π Σ conj(w_{a,b}) F_{a,b}. The input must describe a real,
    /// x-symmetric function; a residual imaginary part above `1e-10·scale` is an error.
    pub fn from_exp_table(class: ClassParams, table: &HashMap<(i64, i64), Complex64>) -> Result<Self> {
        let (mut ma, mut mb) = (0u32, 0u32);
        let mut scale = 0.0f64;
        for ((a, b), v) in table {
            ma = ma.max(a.unsigned_abs() as u32);
            mb = mb.max(b.unsigned_abs() as u32);
            scale = scale.max(v.norm());
        }
        let mut f = SpectralDensity::new(class);
        for idx in enumerate(ma, mb) {
            let mut s = Complex64::new(0.0, 0.0);
            for (ab, w) in idx.exp_expansion() {
                if let Some(v) = table.get(&ab) {
                    s += w.conj() * v;
                }
            }
            s *= 2.0 * PI;
            if s.im.abs() > 1e-10 * scale.max(1.0) {
                return Err(Error::Domain(format!("expansion of {idx:?} has imaginary part {}", s.im)));
            }
            if s.re != 0.0 {
                f.coeffs.insert(idx, s.re);
            }
        }
        Ok(f)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coeffs: Vec<serde_json::Value> = self
            .coeffs
            .iter()
            .map(|(k, v)| {
                serde_json::json!({
                    "parity": if k.parity == Parity::Plus { "+" } else { "-" },
                    "j": k.j, "j2": k.j2, "value": v
                })
            })
            .collect();
        serde_json::json!({"s": self.class.s, "L": self.class.l, "rho_star": self.class.rho_star, "coeffs": coeffs})
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Coef {
            parity: Parity,
            j: u32,
            j2: u32,
            value: f64,
        }
        #[derive(Deserialize)]
        struct Raw {
            s: f64,
            #[serde(rename = "L")]
            l: f64,
            rho_star: f64,
            coeffs: Vec<Coef>,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let class = ClassParams::new(raw.s, raw.l, raw.rho_star)?;
        let mut f = SpectralDensity::new(class);
        for c in raw.coeffs {
            let idx = BasisIndex::new(c.parity, c.j, c.j2)?;
            *f.coeffs.entry(idx).or_insert(0.0) += c.value;
        }
        Ok(f)
    }

    /// Even reflection in t. Every φ^± is already 1-periodic in t with f(0,·) = f(1,·),
    /// so this validates that property and returns the density unchanged.
    pub fn mirror_extend(&self) -> Result<SpectralDensity> {
        let xs = uniform_points(33, -PI, PI);
        let a = self.values_on(&[0.0], &xs);
        let b = self.values_on(&[1.0], &xs);
        let scale = self.coeffs.values().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for (u, v) in a.iter().zip(&b) {
            if (u - v).abs() > 1e-12 * scale {
                return Err(Error::Internal("span density violates f(0,·) = f(1,·)".into()));
            }
        }
        Ok(self.clone())
    }
}

#[derive(Clone, Debug)]
pub struct ClassCheck {
    pub sobolev_sum: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub pass: bool,
    pub entries: Vec<CheckEntry>,
}

/// Pointwise samples on a quadrature grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    pub grid: Grid2,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn from_fn(grid: &Grid2, f: impl Fn(f64, f64) -> f64) -> Self {
        GridFunction { grid: grid.clone(), values: grid.sample(f) }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.iter().map(|v| f(*v)).collect() }
    }

    pub fn try_map(&self, f: impl Fn(f64) -> Result<f64>) -> Result<GridFunction> {
        let values = self.values.iter().map(|v| f(*v)).collect::<Result<Vec<_>>>()?;
        Ok(GridFunction { grid: self.grid.clone(), values })
    }

    /// ⟨g, φ_k⟩ by quadrature.
    pub fn inner_basis(&self, idx: &BasisIndex) -> f64 {
        let phi = self.grid.sample(|t, x| idx.eval(t, x));
        self.grid.inner(&self.values, &phi)
    }

    /// Quadrature projection onto the listed basis functions.
    pub fn project_onto(&self, basis: &[BasisIndex], class: ClassParams) -> SpectralDensity {
        let g = &self.grid;
        let nx = g.x.len();
        let mut f = SpectralDensity::new(class);
        let maxj2 = basis.iter().map(|k| k.j2).max().unwrap_or(0);
        // Σ_x w_x g(t,x) cos(j'x) for every t row, then the t-integral per index.
        let cosx: Vec<Vec<f64>> = (0..=maxj2).map(|k| g.x.iter().map(|x| (k as f64 * x).cos()).collect()).collect();
        let mut rows = vec![vec![0.0; g.t.len()]; maxj2 as usize + 1];
        for (k2, row) in rows.iter_mut().enumerate() {
            for (a, r) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for b in 0..nx {
                    s += g.wx[b] * self.values[a * nx + b] * cosx[k2][b];
                }
                *r = s;
            }
        }
        for idx in basis {
            let row = &rows[idx.j2 as usize];
            let mut s = 0.0;
            for (a, t) in g.t.iter().enumerate() {
                s += g.wt[a] * row[a] * idx.time_factor(*t);
            }
            *f.coeffs.entry(*idx).or_insert(0.0) += idx.norm_const() * s;
        }
        f
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.inner(&self.values, &self.values)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Pointwise log f on the grid.
pub fn transform_log(f: &SpectralDensity, grid: &Grid2) -> Result<GridFunction> {
    f.on_grid(grid).try_map(|v| {
        if v > 0.0 {
            Ok(v.ln())
        } else {
            Err(Error::Domain(format!("log of nonpositive density value {v}")))
        }
    })
}

/// Pointwise f^{−1/2} on the grid.
pub fn transform_inv_sqrt(f: &SpectralDensity, grid: &Grid2) -> Result<GridFunction> {
    f.on_grid(grid).try_map(|v| {
        if v > 0.0 {
            Ok(1.0 / v.sqrt())
        } else {
            Err(Error::Domain(format!("inverse square root of nonpositive density value {v}")))
        }
    })
}

/// Quadrature projection of a callable onto the (κ₁,κ₂) block.
pub fn project_fn(f: impl Fn(f64, f64) -> f64, kappa1: u32, kappa2: u32, grid: &Grid2, class: ClassParams) -> SpectralDensity {
    GridFunction::from_fn(grid, f).project_onto(&enumerate(kappa1, kappa2), class)
}

/// Even reflection of a callable density onto t ∈ [0, 2]: g(t) = f(t) on [0,1], f(2−t) on [1,2].
pub struct Mirrored<F: Fn(f64, f64) -> f64> {
    pub inner: F,
}

impl<F: Fn(f64, f64) -> f64> Mirrored<F> {
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=2.0).contains(&t) || !(-PI..=PI).contains(&x) {
            return Err(Error::Domain(format!("(t, x) = ({t}, {x}) outside [0,2]×[−π,π]")));
        }
        let u = if t <= 1.0 { t } else { 2.0 - t };
        Ok((self.inner)(u, x))
    }

    pub fn period(&self) -> f64 {
        2.0
    }
}

pub fn mirror_extend_fn<F: Fn(f64, f64) -> f64>(f: F) -> Mirrored<F> {
    Mirrored { inner: f }
}

/// Transfer function A(u,x) = Σ a_{j,k} exp(2πiju + ikx), with a_{j,k} = conj(a_{−j,k}) so that
/// A(u,−x) = conj(A(u,x)). The triangular array is taken as A⁰_{t,n}(x) = A(t/n, x).
#[derive(Clone, Debug)]
pub struct TransferFunction {
    coeffs: BTreeMap<(i64, i64), Complex64>,
}

impl TransferFunction {
    pub fn new(coeffs: impl IntoIterator<Item = ((i64, i64), Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<(i64, i64), Complex64> = BTreeMap::new();
        for (k, v) in coeffs {
            *map.entry(k).or_insert(Complex64::new(0.0, 0.0)) += v;
        }
        let scale = map.values().fold(0.0f64, |m, v| m.max(v.norm())).max(1.0);
        for (&(j, k), v) in &map {
            let mirror = map.get(&(-j, k)).cloned().unwrap_or_default();
            if (v - mirror.conj()).norm() > 1e-12 * scale {
                return Err(Error::Domain(format!(
                    "transfer function lacks conjugate symmetry A(u,−x) = conj A(u,x) at ({j},{k})"
                )));
            }
        }
        Ok(TransferFunction { coeffs: map })
    }

    pub fn coeffs(&self) -> &BTreeMap<(i64, i64), Complex64> {
        &self.coeffs
    }

    pub fn eval(&self, u: f64, x: f64) -> Complex64 {
        self.coeffs
            .iter()
            .map(|(&(j, k), a)| a * Complex64::from_polar(1.0, 2.0 * PI * j as f64 * u + k as f64 * x))
            .sum()
    }

    /// c_k(u) = Σ_j a_{j,k} exp(2πiju); real by the symmetry condition.
    pub fn c_k(&self, k: i64, u: f64) -> f64 {
        self.coeffs
            .iter()
            .filter(|((_, kk), _)| *kk == k)
            .map(|(&(j, _), a)| (a * Complex64::from_polar(1.0, 2.0 * PI * j as f64 * u)).re)
            .sum()
    }

    pub fn x_freq_range(&self) -> (i64, i64) {
        self.coeffs.keys().fold((i64::MAX, i64::MIN), |(lo, hi), (_, k)| (lo.min(*k), hi.max(*k)))
    }

    /// f = A·conj(A) expanded in the φ^± system (exact for trigonometric-polynomial A).
    pub fn density(&self, class: ClassParams) -> Result<SpectralDensity> {
        let mut table: HashMap<(i64, i64), Complex64> = HashMap::new();
        for (&(j1, k1), a) in &self.coeffs {
            for (&(j2, k2), b) in &self.coeffs {
                *table.entry((j1 - j2, k1 - k2)).or_default() += a * b.conj();
            }
        }
        SpectralDensity::from_exp_table(class, &table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class() -> ClassParams {
        ClassParams::new(11.0, 10.0, 0.5).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = SpectralDensity::constant(class(), 1.0);
        assert!((f.eval(0.3, -1.0).unwrap() - 1.0).abs() < 1e-15);
        let g = SpectralDensity::new(class()).with(BasisIndex::plus(0, 1), 1.0);
        assert!((g.eval(0.0, 0.0).unwrap() - (1.0 / PI).sqrt()).abs() < 1e-15);
        let h = SpectralDensity::new(class()).with(BasisIndex::plus(1, 1), 0.3);
        assert!(h.eval(0.25, PI / 2.0).unwrap().abs() < 1e-15);
        assert!(f.eval(1.5, 0.0).is_err());
        assert!(f.eval(0.5, 4.0).is_err());
    }

    #[test]
    fn minus_requires_positive_j() {
        assert!(BasisIndex::new(Parity::Minus, 0, 3).is_err());
        assert!(BasisIndex::new(Parity::Minus, 1, 0).is_ok());
    }

    #[test]
    fn enumeration_order_and_size() {
        let e = enumerate(2, 1);
        assert_eq!(e.len(), block_size(2, 1));
        assert_eq!(e[0], BasisIndex::plus(0, 0));
        assert_eq!(e[1], BasisIndex::plus(0, 1));
        assert_eq!(e[2], BasisIndex::plus(1, 0));
        assert_eq!(e[6], BasisIndex::minus(1, 0));
        let ext = enumerate_extended(1, 1, 20);
        assert_eq!(&ext[..6], &enumerate(1, 1)[..]);
        let set: HashSet<_> = ext.iter().collect();
        assert_eq!(set.len(), 20);
    }

    #[test]
    fn exp_expansion_reproduces_phi() {
        for idx in enumerate(3, 3) {
            let w = idx.exp_expansion();
            for &(t, x) in &[(0.1, 0.4), (0.77, -2.5), (0.5, 3.0)] {
                let s: Complex64 = w
                    .iter()
                    .map(|((a, b), c)| c * Complex64::from_polar(1.0, 2.0 * PI * *a as f64 * t + *b as f64 * x))
                    .sum();
                assert!((s.re - idx.eval(t, x)).abs() < 1e-14 && s.im.abs() < 1e-14, "{idx:?}");
            }
        }
    }

    #[test]
    fn exp_table_roundtrip() {
        let f = SpectralDensity::constant(class(), 1.2)
            .with(BasisIndex::plus(1, 2), 0.1)
            .with(BasisIndex::minus(2, 0), -0.05)
            .with(BasisIndex::minus(1, 3), 0.02);
        let g = SpectralDensity::from_exp_table(class(), &f.exp_table()).unwrap();
        for (k, v) in &f.coeffs {
            assert!((g.coeff(k) - v).abs() < 1e-14);
        }
        assert!((g.l2_norm_sq() - f.l2_norm_sq()).abs() < 1e-13);
    }

    #[test]
    fn orthonormal_first_fifty() {
        let grid = Grid2::new(64, 64);
        let basis = enumerate_extended(4, 5, 50);
        let samples: Vec<Vec<f64>> = basis.iter().map(|k| grid.sample(|t, x| k.eval(t, x))).collect();
        for a in 0..50 {
            for b in 0..=a {
                let ip = grid.inner(&samples[a], &samples[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-8, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn sobolev_check_examples() {
        let c = ClassParams::new(11.0, 10.0, 0.5).unwrap();
        let one = SpectralDensity::constant(c, 1.0).sobolev_check();
        assert!(one.pass);
        assert_eq!(one.sobolev_sum, 0.0);
        let big = SpectralDensity::constant(c, 1.0).with(BasisIndex::plus(1, 0), 4.0).sobolev_check();
        assert!(!big.entries[0].pass);
        assert!((big.entries[0].margin - (10.0 - 16.0)).abs() < 1e-12);
        let low = SpectralDensity::constant(c, 0.25).sobolev_check();
        assert!(!low.pass && !low.entries[1].pass);
    }

    #[test]
    fn transforms_on_constants() {
        let grid = Grid2::new(8, 8);
        let one = SpectralDensity::constant(class(), 1.0);
        assert!(transform_log(&one, &grid).unwrap().sup_abs() < 1e-15);
        let four = SpectralDensity::constant(class(), 4.0);
        let l = transform_log(&four, &grid).unwrap();
        assert!(l.values.iter().all(|v| (v - 4f64.ln()).abs() < 1e-14));
        let s = transform_inv_sqrt(&four, &grid).unwrap();
        assert!(s.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let neg = SpectralDensity::constant(class(), -1.0);
        assert!(transform_log(&neg, &grid).is_err());
    }

    #[test]
    fn log_projection_matches_fine_trapezoid_oracle() {
        // f = 1 + 0.5 cos(x) cos(2πt), written in the φ system.
        let c = class();
        let f = SpectralDensity::constant(c, 1.0).with(BasisIndex::plus(1, 1), 0.5 / (2.0 / PI).sqrt());
        let grid = Grid2::default_order();
        let lg = transform_log(&f, &grid).unwrap();
        let basis = enumerate(2, 2);
        let proj = lg.project_onto(&basis, c);
        // periodic trapezoid rule on a 2560×2560 grid
        let m = 2560;
        for idx in &basis {
            let mut s = 0.0;
            for a in 0..m {
                let t = a as f64 / m as f64;
                for b in 0..m {
                    let x = -PI + 2.0 * PI * b as f64 / m as f64;
                    let v = 1.0 + 0.5 * x.cos() * (2.0 * PI * t).cos();
                    s += v.ln() * idx.eval(t, x);
                }
            }
            s *= 2.0 * PI / (m * m) as f64;
            assert!((proj.coeff(idx) - s).abs() < 1e-10, "{idx:?}: {} vs {s}", proj.coeff(idx));
        }
    }

    #[test]
    fn mirror_examples() {
        let f = SpectralDensity::constant(class(), 1.0).with(BasisIndex::minus(1, 1), 0.1);
        assert_eq!(f.mirror_extend().unwrap(), f);
        let m = mirror_extend_fn(|t: f64, x: f64| 1.0 + t + 0.1 * x.cos());
        assert_eq!(m.period(), 2.0);
        for &t in &[0.0, 0.3, 0.9, 1.0] {
            assert_eq!(m.eval(t, 0.4).unwrap(), m.eval(2.0 - t, 0.4).unwrap());
        }
        assert_ne!(m.eval(0.0, 0.0).unwrap(), m.eval(1.0, 0.0).unwrap());
    }

    #[test]
    fn transfer_function_symmetry_and_density() {
        let bad = TransferFunction::new([((1, 0), Complex64::new(0.0, 1.0))]);
        assert!(bad.is_err());
        let a = TransferFunction::new([
            ((0, 0), Complex64::new(1.0, 0.0)),
            ((0, 1), Complex64::new(0.3, 0.0)),
            ((1, 1), Complex64::new(0.05, 0.02)),
            ((-1, 1), Complex64::new(0.05, -0.02)),
        ])
        .unwrap();
        let f = a.density(class()).unwrap();
        for &(u, x) in &[(0.1, 0.2), (0.6, -1.7), (0.95, 3.0)] {
            let v = a.eval(u, x).norm_sqr();
            assert!((f.eval(u, x).unwrap() - v).abs() < 1e-13);
            assert!((a.eval(u, -x) - a.eval(u, x).conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn json_roundtrip() {
        let f = SpectralDensity::constant(class(), 1.0).with(BasisIndex::minus(2, 1), 0.01);
        let g = SpectralDensity::from_json(&f.to_json()).unwrap();
        assert_eq!(f, g);
    }
}
