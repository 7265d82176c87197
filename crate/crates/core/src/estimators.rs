//! Uniform entry point over all estimators.

use serde::Serialize;

use crate::coverage::estimate_sc;
use crate::error::{MseError, Result};
use crate::estimate::{EstimateResult, Method};
use crate::loglinear::{estimate_loglinear, LoglinearModel, LoglinearOptions};
use crate::mtb::{estimate_mtb, MtbConfig};
use crate::table::TrsTable;
use crate::thbm::{estimate_thbm, ThbmConfig};

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct EstimatorConfig {
    pub thbm: ThbmConfig,
    #[serde(skip)]
    pub mtb: MtbConfig,
    pub loglinear: LoglinearOptions,
}

/// Runs one estimator. `Method::Truth` has no meaning without a known
/// population size and is rejected here.
pub fn run_estimator(table: &TrsTable, method: Method, cfg: &EstimatorConfig) -> Result<EstimateResult> {
    match method {
        Method::Thbm => estimate_thbm(table, &cfg.thbm),
        Method::Sc => estimate_sc(table),
        Method::Mtb => estimate_mtb(table, &cfg.mtb),
        Method::Im | Method::Llm | Method::Qsm | Method::Pqsm => {
            let model = LoglinearModel::from_method(method).expect("log-linear method");
            estimate_loglinear(table, model, cfg.loglinear)
        }
        Method::Truth => Err(MseError::Domain("the truth oracle needs a known N".into())),
    }
}

/// Parses a comma-separated method list; `all` expands to every estimator.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part.eq_ignore_ascii_case("all") {
            out.extend(Method::ALL);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err(MseError::Parse("no methods given".into()));
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|m| seen.insert(*m));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::builtin_dataset;

    #[test]
    fn dispatch_all() {
        let t = builtin_dataset("als_deployed").unwrap();
        let cfg = EstimatorConfig { thbm: ThbmConfig { k: 50, max_iter: 20, ..Default::default() }, ..Default::default() };
        for m in Method::ALL {
            let r = run_estimator(&t, m, &cfg).unwrap();
            assert_eq!(r.method, m);
            assert!(r.n_hat >= 40.0);
        }
        assert!(run_estimator(&t, Method::Truth, &cfg).is_err());
    }

    #[test]
    fn method_lists() {
        assert_eq!(parse_methods("all").unwrap().len(), 7);
        assert_eq!(parse_methods("sc, llm,sc").unwrap(), vec![Method::Sc, Method::Llm]);
        assert!(parse_methods("sc,foo").is_err());
        assert!(parse_methods("").is_err());
    }
}
