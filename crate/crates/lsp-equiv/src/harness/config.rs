//! Run configuration, read from JSON.

use crate::error::{Error, Result};
use crate::gaussianize::Schedule;
use crate::spectral::{BasisIndex, ClassParams, SpectralDensity};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_grid: Vec<usize>,
    pub seed: u64,
    pub schedule: Schedule,
    /// Overrides the scheduled K in the condition table.
    pub k_override: Option<usize>,
    /// Edgeworth order Q
    pub q: usize,
    /// Fourier-tail radius R
    pub r: f64,
    pub class: ClassParams,
    /// Constant level of the default density.
    pub level: f64,
    /// Level used by the white-noise risk study.
    pub risk_level: f64,
    /// Optional density in the `SpectralDensity` JSON layout; replaces the default modulation.
    pub density: Option<serde_json::Value>,
    pub risk_replicates: usize,
    pub goe_replicates: usize,
    /// White-noise pilot risk per K allowed by the risk study.
    pub risk_constant: f64,
    /// Budget each condition quantity is flagged against.
    pub condition_budget: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_grid: vec![64, 128, 256],
            seed: 1,
            schedule: Schedule::default(),
            k_override: None,
            q: 4,
            r: 10.0,
            class: ClassParams::default(),
            level: 1.0,
            risk_level: 0.6,
            density: None,
            risk_replicates: 50,
            goe_replicates: 2,
            risk_constant: 50.0,
            condition_budget: 1.0,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(p: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(p)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid is empty".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|n| **n < 8) {
            return Err(Error::Config(format!("n = {n} below 8")));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_grid must be strictly ascending".into()));
        }
        if self.q < 2 || !(self.r > 0.0) {
            return Err(Error::Config("need Q ≥ 2 and R > 0".into()));
        }
        ClassParams::new(self.class.s, self.class.l, self.class.rho_star)?;
        Ok(())
    }

    /// level + a fixed smooth modulation in W(s, L, ρ*), or the configured density shifted to `level`.
    pub fn density_at(&self, level: f64) -> Result<SpectralDensity> {
        let base = match &self.density {
            Some(v) => SpectralDensity::from_json(v)?,
            None => SpectralDensity::new(self.class)
                .with(BasisIndex::plus(1, 1), 0.04)
                .with(BasisIndex::minus(1, 0), 0.03)
                .with(BasisIndex::plus(0, 1), 0.05),
        };
        let zero = BasisIndex::plus(0, 0);
        let shift = level * (2.0 * std::f64::consts::PI).sqrt() - base.coeff(&zero);
        Ok(base.with(zero, shift))
    }

    pub fn density(&self) -> Result<SpectralDensity> {
        self.density_at(self.level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&s).unwrap(), c);
        let chk = c.density().unwrap().sobolev_check();
        assert!(chk.entries.iter().all(|e| e.pass), "{:?}", chk.entries);
        let chk = c.density_at(c.risk_level).unwrap().sobolev_check();
        assert!(chk.entries.iter().all(|e| e.pass), "{:?}", chk.entries);
    }

    #[test]
    fn rejects_bad_grids_and_fields() {
        assert!(RunConfig::from_json_str(r#"{"n_grid": [4, 16]}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"n_grid": [64, 32]}"#).is_err());
        assert!(RunConfig::from_json_str(r#"{"nope": 1}"#).is_err());
        assert_eq!(RunConfig::from_json_str(r#"{"n_grid": [64]}"#).unwrap().n_grid, vec![64]);
    }
}
