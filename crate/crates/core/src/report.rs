//! Check reports: one inequality or identity instance with its verdict.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::stats::SE_MULTIPLIER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `statistic <= bound`
    Le,
    /// `statistic >= bound`
    Ge,
    /// `statistic == bound`
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    ReportOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_digest: Option<String>,
    pub seed: u64,
    #[serde(default)]
    pub samples: usize,
    #[serde(default)]
    pub replicas: usize,
    #[serde(default)]
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub statistic: f64,
    pub bound: f64,
    pub se: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub verdict: Verdict,
    pub provenance: Provenance,
    /// Short human label of the inequality instance.
    pub anchor: String,
    #[serde(default)]
    pub details: BTreeMap<String, Value>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, relation: Relation, statistic: f64, bound: f64) -> Self {
        let mut r = CheckReport {
            check_name: name.into(),
            statistic,
            bound,
            se: 0.0,
            tolerance: 0.0,
            relation,
            verdict: Verdict::Fail,
            provenance: Provenance::default(),
            anchor: String::new(),
            details: BTreeMap::new(),
        };
        r.decide();
        r
    }

    pub fn le(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, Relation::Le, statistic, bound)
    }

    pub fn ge(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, Relation::Ge, statistic, bound)
    }

    pub fn eq(name: impl Into<String>, statistic: f64, bound: f64) -> Self {
        Self::new(name, Relation::Eq, statistic, bound)
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.se = se;
        self.decide();
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self.decide();
        self
    }

    pub fn with_anchor(mut self, anchor: impl Into<String>) -> Self {
        self.anchor = anchor.into();
        self
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = p;
        self
    }

    pub fn detail(mut self, key: &str, value: impl Serialize) -> Self {
        self.details.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
        self
    }

    pub fn report_only(mut self) -> Self {
        self.verdict = Verdict::ReportOnly;
        self
    }

    /// Forces a failure (e.g. a sub-condition that the scalar does not carry).
    pub fn fail_if(mut self, cond: bool, reason: &str) -> Self {
        if cond && self.verdict == Verdict::Pass {
            self.verdict = Verdict::Fail;
            self.details.insert("failure".into(), Value::String(reason.into()));
        }
        self
    }

    /// Slack allowed around the bound: `4 se + tolerance`.
    pub fn margin(&self) -> f64 {
        SE_MULTIPLIER * self.se + self.tolerance
    }

    fn decide(&mut self) {
        if self.verdict == Verdict::ReportOnly {
            return;
        }
        let m = self.margin();
        let ok = match self.relation {
            Relation::Le => self.statistic <= self.bound + m,
            Relation::Ge => self.statistic >= self.bound - m,
            Relation::Eq => (self.statistic - self.bound).abs() <= m,
        };
        self.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_uses_four_standard_errors() {
        let r = CheckReport::le("x", 1.35, 1.0).with_se(0.1);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = CheckReport::le("x", 1.45, 1.0).with_se(0.1);
        assert_eq!(r.verdict, Verdict::Fail);
        let r = CheckReport::eq("x", 1.0 + 1e-9, 1.0).with_tolerance(1e-8);
        assert_eq!(r.verdict, Verdict::Pass);
        let r = CheckReport::ge("x", 0.5, 1.0).with_tolerance(0.6);
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn nan_statistic_fails() {
        assert_eq!(CheckReport::le("x", f64::NAN, 1.0).verdict, Verdict::Fail);
    }

    #[test]
    fn json_round_trip() {
        let r = CheckReport::le("x", 0.5, 1.0).with_anchor("demo").detail("n", 3);
        let s = serde_json::to_string(&r).unwrap();
        let back: CheckReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
