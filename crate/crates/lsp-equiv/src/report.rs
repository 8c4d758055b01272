//! Verification records shared by every module.

use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "lsp-equiv/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckEntry {
    pub check_id: String,
    pub paper_ref: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub margin: f64,
    pub pass: bool,
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckEntry {
    /// Inequality `lhs ≤ rhs + tolerance`.
    pub fn le(id: impl Into<String>, paper_ref: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let pass = lhs <= rhs + tolerance;
        CheckEntry {
            check_id: id.into(),
            paper_ref: paper_ref.into(),
            lhs,
            rhs,
            tolerance,
            margin: rhs - lhs,
            pass,
            runtime_ms: 0.0,
            note: None,
        }
    }

    /// Skipped check: recorded as passing with a note, since its precondition did not hold.
    pub fn skipped(id: impl Into<String>, paper_ref: impl Into<String>, note: impl Into<String>) -> Self {
        CheckEntry {
            check_id: id.into(),
            paper_ref: paper_ref.into(),
            lhs: 0.0,
            rhs: 0.0,
            tolerance: 0.0,
            margin: 0.0,
            pass: true,
            runtime_ms: 0.0,
            note: Some(note.into()),
        }
    }

    pub fn with_runtime(mut self, ms: f64) -> Self {
        self.runtime_ms = ms;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn failed_with(id: impl Into<String>, paper_ref: impl Into<String>, err: impl std::fmt::Display) -> Self {
        let mut e = Self::le(id, paper_ref, 1.0, 0.0, 0.0);
        e.lhs = f64::NAN;
        e.rhs = f64::NAN;
        e.margin = f64::NAN;
        e.pass = false;
        e.note = Some(err.to_string());
        e
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema: String,
    pub entries: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn new() -> Self {
        VerificationReport { schema: SCHEMA.to_string(), entries: Vec::new() }
    }

    pub fn push(&mut self, e: CheckEntry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, es: impl IntoIterator<Item = CheckEntry>) {
        self.entries.extend(es);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }
}

/// Format with 17 significant digits, the precision used for every serialized float.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.16e}", v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_is_le_with_tolerance() {
        assert!(CheckEntry::le("a", "plumbing", 1.0, 1.0, 0.0).pass);
        assert!(!CheckEntry::le("a", "plumbing", 1.0 + 1e-9, 1.0, 0.0).pass);
        assert!(CheckEntry::le("a", "plumbing", 1.0 + 1e-9, 1.0, 1e-8).pass);
    }

    #[test]
    fn seventeen_digits_roundtrip() {
        for v in [0.1, 1.0 / 3.0, 6.02214076e23, -2.5e-300] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }
}
