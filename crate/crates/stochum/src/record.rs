//! The result record written as `result.json`.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use crate::config::ScenarioConfig;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    /// Not applicable to this run (disabled, or the inputs make it vacuous).
    Skip,
}

/// One line of the invariant ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    /// Measured quantity; `null` when the check could not be evaluated.
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Ledger {
    pub checks: Vec<Check>,
}

impl Ledger {
    /// Records `value <= tolerance`.
    pub fn at_most(&mut self, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        let status = if value <= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        self.push(name, status, Some(value), Some(tolerance), detail);
    }

    /// Records `value >= tolerance`.
    pub fn at_least(&mut self, name: &str, value: f64, tolerance: f64, detail: impl Into<String>) {
        let status = if value >= tolerance {
            Status::Pass
        } else {
            Status::Fail
        };
        self.push(name, status, Some(value), Some(tolerance), detail);
    }

    pub fn flag(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.push(name, status, None, None, detail);
    }

    pub fn fail(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Fail, None, None, detail);
    }

    pub fn skip(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Skip, None, None, detail);
    }

    pub fn push(
        &mut self,
        name: &str,
        status: Status,
        value: Option<f64>,
        tolerance: Option<f64>,
        detail: impl Into<String>,
    ) {
        debug_assert!(
            self.checks.iter().all(|c| c.name != name),
            "duplicate ledger entry {name}"
        );
        self.checks.push(Check {
            name: name.to_string(),
            status,
            value: value.filter(|v| v.is_finite()),
            tolerance,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.checks.iter().map(|c| c.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub artifact_version: String,
    pub mode: String,
    /// The integrated-norm reading of the admissible control set.
    pub admissible_set: &'static str,
    pub config: Option<ScenarioConfig>,
    pub outputs: Value,
    pub ledger: Ledger,
    pub passed: bool,
    /// Wall-clock seconds per phase; the only nondeterministic field.
    pub timings: BTreeMap<String, f64>,
}

pub const ADMISSIBLE_SET: &str =
    "integrated: ||u||_{L2_F(0,T;L2(D))} <= N (the pointwise-in-time bound is not enforced)";

impl ResultRecord {
    pub fn new(mode: &str, config: Option<ScenarioConfig>) -> Self {
        ResultRecord {
            artifact_version: ARTIFACT_VERSION.to_string(),
            mode: mode.to_string(),
            admissible_set: ADMISSIBLE_SET,
            config,
            outputs: Value::Null,
            ledger: Ledger::default(),
            passed: false,
            timings: BTreeMap::new(),
        }
    }

    pub fn finish(&mut self) {
        self.passed = self.ledger.passed();
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_statuses() {
        let mut l = Ledger::default();
        l.at_most("small", 1e-9, 1e-8, "");
        l.at_least("large", 5.0, 10.0, "");
        l.skip("off", "disabled");
        assert_eq!(l.get("small").unwrap().status, Status::Pass);
        assert_eq!(l.get("large").unwrap().status, Status::Fail);
        assert!(!l.passed());
        assert_eq!(l.failures().count(), 1);
        assert_eq!(l.names(), vec!["small", "large", "off"]);
    }

    #[test]
    fn non_finite_values_serialize_as_null() {
        let mut l = Ledger::default();
        l.at_most("nan", f64::NAN, 1.0, "");
        assert_eq!(l.checks[0].status, Status::Fail);
        let json = serde_json::to_string(&l).unwrap();
        assert!(json.contains("\"value\":null"));
    }
}
