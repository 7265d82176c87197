use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::MseError;
use crate::table::TrsTable;

/// Estimators available to the CLI, bootstrap and benchmark harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Thbm,
    Im,
    Llm,
    Qsm,
    Pqsm,
    Sc,
    Mtb,
    /// Returns the true population size; benchmark calibration only.
    Truth,
}

impl Method {
    /// The seven real estimators, in report order.
    pub const ALL: [Method; 7] = [
        Method::Thbm,
        Method::Sc,
        Method::Qsm,
        Method::Pqsm,
        Method::Llm,
        Method::Mtb,
        Method::Im,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Thbm => "thbm",
            Method::Im => "im",
            Method::Llm => "llm",
            Method::Qsm => "qsm",
            Method::Pqsm => "pqsm",
            Method::Sc => "sc",
            Method::Mtb => "mtb",
            Method::Truth => "truth",
        }
    }

    /// Whether repeated calls with different streams can differ.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Thbm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "thbm" => Method::Thbm,
            "im" => Method::Im,
            "llm" => Method::Llm,
            "qsm" => Method::Qsm,
            "pqsm" => Method::Pqsm,
            "sc" => Method::Sc,
            "mtb" | "m_tb" => Method::Mtb,
            "truth" => Method::Truth,
            other => return Err(MseError::Parse(format!("unknown method '{other}'"))),
        })
    }
}

fn round2<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_to(*v, 2))
}

fn round2_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&round_to(*x, 2)),
        None => s.serialize_none(),
    }
}

pub(crate) fn round_to(v: f64, digits: i32) -> f64 {
    if !v.is_finite() {
        return v;
    }
    let f = 10f64.powi(digits);
    (v * f).round() / f
}

/// Uniform output of every estimator.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateResult {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub x0: u64,
    #[serde(serialize_with = "round2")]
    pub n_hat: f64,
    #[serde(serialize_with = "round2_opt")]
    pub ci_lower: Option<f64>,
    #[serde(serialize_with = "round2_opt")]
    pub ci_upper: Option<f64>,
    pub feasible: bool,
    pub diagnostics: BTreeMap<String, Value>,
}

impl EstimateResult {
    pub fn new(method: Method, table: &TrsTable, n_hat: f64) -> Self {
        let x0 = table.x0();
        Self {
            method,
            label: table.label().map(str::to_owned),
            x0,
            n_hat,
            ci_lower: None,
            ci_upper: None,
            feasible: n_hat.is_finite() && n_hat >= x0 as f64,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diag(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    pub fn set_diag(&mut self, key: &str, value: impl Into<Value>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }

    /// Integer estimate as reported in summary tables.
    pub fn rounded(&self) -> i64 {
        self.n_hat.round() as i64
    }

    /// Attaches an interval. Ignored for infeasible estimates, which never
    /// carry a CI.
    pub fn set_ci(&mut self, lower: f64, upper: f64) {
        if self.feasible {
            self.ci_lower = Some(lower.min(self.n_hat));
            self.ci_upper = Some(upper.max(self.n_hat));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_flag() {
        let t = TrsTable::validate([1; 7]).unwrap();
        assert!(EstimateResult::new(Method::Sc, &t, 7.0).feasible);
        assert!(!EstimateResult::new(Method::Sc, &t, 6.9).feasible);
        assert!(!EstimateResult::new(Method::Sc, &t, f64::NAN).feasible);
        let mut r = EstimateResult::new(Method::Sc, &t, 6.0);
        r.set_ci(5.0, 9.0);
        assert!(r.ci_lower.is_none());
    }

    #[test]
    fn serializes_two_decimals() {
        let t = TrsTable::validate([1; 7]).unwrap();
        let r = EstimateResult::new(Method::Llm, &t, 45.208_333);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"n_hat\":45.21"), "{s}");
        assert!(s.contains("\"method\":\"llm\""), "{s}");
    }

    #[test]
    fn method_parse() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("xyz".parse::<Method>().is_err());
    }
}
