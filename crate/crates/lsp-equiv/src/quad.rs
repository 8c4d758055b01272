//! Gauss–Legendre rules and the tensor grid on [0,1]×[−π,π].

use std::f64::consts::PI;

/// Nodes and weights of the `m`-point Gauss–Legendre rule on [−1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for k in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Rule on [a, b].
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    let h = 0.5 * (b - a);
    let c = 0.5 * (a + b);
    (x.iter().map(|v| c + h * v).collect(), w.iter().map(|v| h * v).collect())
}

/// Tensor Gauss–Legendre grid over t ∈ [0,1], x ∈ [−π,π]; values are stored t-major.
#[derive(Clone, Debug)]
pub struct Grid2 {
    pub t: Vec<f64>,
    pub wt: Vec<f64>,
    pub x: Vec<f64>,
    pub wx: Vec<f64>,
}

impl Grid2 {
    pub fn new(mt: usize, mx: usize) -> Self {
        let (t, wt) = gauss_legendre_on(mt, 0.0, 1.0);
        let (x, wx) = gauss_legendre_on(mx, -PI, PI);
        Grid2 { t, wt, x, wx }
    }

    pub fn default_order() -> Self {
        Self::new(256, 256)
    }

    pub fn len(&self) -> usize {
        self.t.len() * self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for &t in &self.t {
            for &x in &self.x {
                v.push(f(t, x));
            }
        }
        v
    }

    /// ∫∫ g over the domain for sampled `g`.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        let nx = self.x.len();
        let mut s = 0.0;
        for (a, wt) in self.wt.iter().enumerate() {
            let row = &g[a * nx..(a + 1) * nx];
            let r: f64 = row.iter().zip(&self.wx).map(|(v, w)| v * w).sum();
            s += wt * r;
        }
        s
    }

    /// ∫∫ g·h.
    pub fn inner(&self, g: &[f64], h: &[f64]) -> f64 {
        let nx = self.x.len();
        let mut s = 0.0;
        for (a, wt) in self.wt.iter().enumerate() {
            let mut r = 0.0;
            for b in 0..nx {
                r += g[a * nx + b] * h[a * nx + b] * self.wx[b];
            }
            s += wt * r;
        }
        s
    }
}

/// Uniform grid including both endpoints, used for class-membership checks.
pub fn uniform_points(m: usize, a: f64, b: f64) -> Vec<f64> {
    if m == 1 {
        return vec![a];
    }
    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        for deg in 0..20 {
            let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "deg {deg}");
        }
    }

    #[test]
    fn large_order_weights_sum() {
        let (_, w) = gauss_legendre(256);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn grid_area() {
        let g = Grid2::new(16, 16);
        let ones = vec![1.0; g.len()];
        assert!((g.integrate(&ones) - 2.0 * PI).abs() < 1e-13);
    }
}
