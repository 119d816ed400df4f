//! Uniform pass/fail reporting for numerical audits.

use serde::{Deserialize, Serialize};

/// One named check: a measured quantity against the bound it must satisfy.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub bound: f64,
}

impl CheckReport {
    /// Check that passes when `measured <= bound`.
    pub fn le(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        CheckReport {
            name: name.into(),
            pass: measured <= bound,
            measured,
            bound,
        }
    }

    /// Check that passes when `measured >= bound`.
    pub fn ge(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        CheckReport {
            name: name.into(),
            pass: measured >= bound,
            measured,
            bound,
        }
    }
}

/// Deterministic JSON for a list of checks: stable field order, no timestamps.
pub fn checks_to_json(checks: &[CheckReport]) -> String {
    serde_json::to_string_pretty(checks).expect("check reports serialize")
}

pub fn all_pass(checks: &[CheckReport]) -> bool {
    checks.iter().all(|c| c.pass)
}
