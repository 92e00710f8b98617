//! Named residual checks shared by every report.

use std::collections::BTreeMap;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes iff `residual < tolerance` (NaN never passes).
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { name: name.into(), residual, tolerance, pass: residual < tolerance }
    }

    /// A boolean condition recorded as residual 0 or 1 against tolerance 0.5.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::new(name, if ok { 0.0 } else { 1.0 }, 0.5)
    }
}

/// Per-check tolerance overrides, keyed by check name.
#[derive(Debug, Clone, Default)]
pub struct Tolerances {
    overrides: BTreeMap<String, f64>,
}

impl Tolerances {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) {
        self.overrides.insert(name.into(), value);
    }

    pub fn is_empty(&self) -> bool {
        self.overrides.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.overrides.keys().map(String::as_str)
    }

    /// Re-evaluates `check` if its name has an override.
    pub fn apply(&self, check: &mut Check) {
        if let Some(&tol) = self.overrides.get(&check.name) {
            check.tolerance = tol;
            check.pass = check.residual < tol;
        }
    }
}

/// Keeps at most 32 values of a spectrum for reports.
pub fn truncate_spectrum(values: &[f64]) -> Vec<f64> {
    values.iter().take(32).copied().collect()
}
