//! Machine-readable reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioEcho;
use crate::error::{Error, Result};
use crate::hodge::HodgeDiagnostics;
use crate::stationary::ReversibilityFlags;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Pass when `value < tolerance`.
    Below,
    /// Pass when `value > tolerance`.
    Above,
}

/// One verdict. A missing value means the quantity could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64, comparison: Comparison) -> Self {
        let value = value.is_finite().then_some(value);
        let mut c = Self {
            name: name.into(),
            value,
            tolerance,
            comparison,
            passed: false,
            detail: String::new(),
        };
        c.passed = c.evaluate();
        c
    }

    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Comparison::Below)
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, tolerance, Comparison::Above)
    }

    /// A check whose quantity failed to compute.
    pub fn failed(name: impl Into<String>, tolerance: f64, err: &Error) -> Self {
        Self {
            name: name.into(),
            value: None,
            tolerance,
            comparison: Comparison::Below,
            passed: false,
            detail: err.to_string(),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn evaluate(&self) -> bool {
        match (self.value, self.comparison) {
            (Some(v), Comparison::Below) => v < self.tolerance,
            (Some(v), Comparison::Above) => v > self.tolerance,
            (None, _) => false,
        }
    }

    /// `PASS name: value < tol` style summary line.
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let op = match self.comparison {
            Comparison::Below => "<",
            Comparison::Above => ">",
        };
        let value = self.value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"));
        let mut s = format!("{verdict} {}: {value} {op} {:.3e}", self.name, self.tolerance);
        if !self.detail.is_empty() {
            s.push_str(&format!(" ({})", self.detail));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HodgeBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub hbar: Vec<f64>,
    pub flags: ReversibilityFlags,
    pub diagnostics: HodgeDiagnostics,
    pub stationarity_residual: f64,
    pub codifferential_residual: f64,
    pub peclet: f64,
    pub warnings: Vec<String>,
    /// Solver tolerance attached to every entry above.
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScgfRow {
    pub c: Vec<f64>,
    pub lambda: f64,
    pub gradient: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScgfBlock {
    pub rows: Vec<ScgfRow>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub h: Vec<f64>,
    pub g: f64,
    pub q: f64,
    pub gap: f64,
    pub c_star: Vec<f64>,
    pub iterations: usize,
    pub gradient_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcRow {
    pub c: Vec<f64>,
    pub defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBlock {
    pub rows: Vec<RateRow>,
    pub gc_defects: Vec<GcRow>,
    pub tolerance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McBlock {
    pub n_paths: usize,
    pub t_final: f64,
    pub dt: f64,
    pub master_seed: u64,
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov_t: Vec<Vec<f64>>,
    pub cov_t_se: Vec<Vec<f64>>,
    pub tv_distance: Option<f64>,
    /// Standard-error multiple used by the statistical checks.
    pub tolerance_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareBlock {
    pub a: String,
    pub b: String,
    pub hbar_a: Vec<f64>,
    pub hbar_b: Vec<f64>,
    pub b_a: Vec<Vec<f64>>,
    pub b_b: Vec<Vec<f64>>,
    pub mc_a: Option<McBlock>,
    pub mc_b: Option<McBlock>,
    /// Paired estimate of `cov_b(1,1) − cov_a(1,1)` and its standard error.
    pub covariance_gap: Option<(f64, f64)>,
    /// `B_b(1,1) − B_a(1,1)` from the Hodge module.
    pub predicted_gap: f64,
    pub rates_a: Vec<RateRow>,
    pub rates_b: Vec<RateRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub scenario: Option<ScenarioEcho>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub hodge: Option<HodgeBlock>,
    pub scgf: Option<ScgfBlock>,
    pub rate: Option<RateBlock>,
    pub mc: Option<McBlock>,
    pub compare: Option<CompareBlock>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: &str, scenario: Option<ScenarioEcho>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            scenario,
            metadata: BTreeMap::new(),
            hodge: None,
            scgf: None,
            rate: None,
            mc: None,
            compare: None,
            checks: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn extend(&mut self, checks: impl IntoIterator<Item = Check>) {
        for c in checks {
            self.push(c);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let r: Report = serde_json::from_str(src)?;
        r.validate()?;
        Ok(r)
    }

    /// Schema version and verdict consistency.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "report schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        for c in &self.checks {
            if c.passed != c.evaluate() {
                return Err(Error::Invalid(format!("check '{}' verdict does not match its value", c.name)));
            }
        }
        if self.passed != self.checks.iter().all(|c| c.passed) {
            return Err(Error::Invalid("overall verdict does not match the checks".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(Check::below("a", 1e-9, 1e-8).passed);
        assert!(!Check::below("a", f64::NAN, 1e-8).passed);
        assert!(Check::above("a", 0.2, 0.1).passed);
        let mut r = Report::new("verify", None);
        r.push(Check::below("x", 2.0, 1.0));
        assert!(!r.passed);
        let back = Report::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn tampered_report_rejected() {
        let mut r = Report::new("verify", None);
        r.push(Check::below("x", 0.5, 1.0));
        let json = r.to_json().unwrap().replace("\"passed\": true", "\"passed\": false");
        assert!(Report::from_json(&json).is_err());
    }
}
