//! Numeric values of the asymptotic conditions at a given n.

use crate::gaussianize::Schedule;
use crate::report::CheckEntry;
use crate::whitenoise::S_STAR;
use serde::Serialize;
use std::f64::consts::E;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRow {
    pub id: String,
    pub paper_ref: String,
    pub value: f64,
    pub budget: f64,
    /// value exceeds budget
    pub flagged: bool,
}

fn row(id: &str, paper_ref: &str, value: f64, budget: f64) -> ConditionRow {
    ConditionRow { id: id.into(), paper_ref: paper_ref.into(), value, budget, flagged: !(value <= budget) }
}

/// Condition quantities for explicit (n, K, γ, Q, R).
pub fn condition_table_with(n: usize, k: usize, gamma: f64, q: usize, r: f64, budget: f64) -> Vec<ConditionRow> {
    let nf = n as f64;
    let kf = k as f64;
    vec![
        row("thm.k10_log_n", "K^10·log n/n → 0", kf.powi(10) * nf.ln() / nf, budget),
        row("pilot.k2_gamma2", "K²/γ² → 0", kf * kf / (gamma * gamma), budget),
        row("localization.gamma4_k", "γ⁴K/n → 0", gamma.powi(4) * kf / nf, budget),
        row("clt.r2_n", "R²/n → 0", r * r / nf, budget),
        row("wn.inv_sqrt_rate", "K^{(s*+1)/2}·γ/√n → 0", kf.powf((S_STAR + 1.0) / 2.0) * gamma / nf.sqrt(), budget),
        row("wn.sp1", "K^{3−s*} + K^{s*+1}γ²/n → 0", kf.powf(3.0 - S_STAR) + kf.powf(S_STAR + 1.0) * gamma * gamma / nf, budget),
        row("wn.goe", "γ²K^{3/2}/n → 0", gamma * gamma * kf.powf(1.5) / nf, budget),
        row("clt.piecing_slack", "Q + K + 1 ≤ R²", (q + k + 1) as f64 / (r * r), 1.0),
    ]
}

/// K defaults to the schedule; γ always follows the schedule rule γ = K·log log(n + e²).
pub fn condition_table(n: usize, schedule: &Schedule, k_override: Option<usize>, q: usize, r: f64, budget: f64) -> Vec<ConditionRow> {
    let k = k_override.unwrap_or_else(|| schedule.k(n));
    let gamma = k as f64 * (n as f64 + E * E).ln().ln();
    condition_table_with(n, k, gamma, q, r, budget)
}

/// The one hard constraint among the conditions: Rₙ² ≥ Qₙ + Kₙ + 1.
pub fn piecing_check(k: usize, q: usize, r: f64) -> CheckEntry {
    CheckEntry::le("conditions.piecing", "R² ≥ Q + K + 1", (q + k + 1) as f64, r * r, 0.0)
}
