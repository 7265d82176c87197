//! Sample-coverage estimator for three lists with pairwise dependence
//! correction.

use serde::Serialize;

use crate::error::{MseError, Result};
use crate::estimate::{EstimateResult, Method};
use crate::table::TrsTable;

/// Below this coverage the estimator is known to be unstable.
pub const LOW_COVERAGE: f64 = 0.55;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoverageParts {
    pub coverage: f64,
    /// `D = x·11 + x1·1 + x11·`.
    pub d: f64,
    /// Bracketed pairwise correction term before division by `3Ĉ`.
    pub correction: f64,
}

/// Coverage and the pieces of the closed form.
pub fn coverage_parts(table: &TrsTable) -> Result<CoverageParts> {
    let c = table.counts_f64();
    let [x111, x110, x101, x011, x100, x010, x001] = c;
    let [n1, n2, n3] = table.margins().map(|m| m as f64);
    for (l, n) in [n1, n2, n3].into_iter().enumerate() {
        if n == 0.0 {
            return Err(MseError::ZeroMargin { list: l + 1 });
        }
    }
    let coverage = 1.0 - (x100 / n1 + x010 / n2 + x001 / n3) / 3.0;

    let x1d0 = x110 + x100;
    let xd10 = x110 + x010;
    let x10d = x101 + x100;
    let xd01 = x101 + x001;
    let x0d1 = x011 + x001;
    let x01d = x011 + x010;
    let x11d = x111 + x110;
    let x1d1 = x111 + x101;
    let xd11 = x111 + x011;

    let d = xd11 + x1d1 + x11d;
    let correction = (x1d0 + xd10) * x11d / (n1 * n2)
        + (x10d + xd01) * x1d1 / (n1 * n3)
        + (x0d1 + x01d) * xd11 / (n2 * n3);
    Ok(CoverageParts { coverage, d, correction })
}

pub fn estimate_sc(table: &TrsTable) -> Result<EstimateResult> {
    let parts = coverage_parts(table)?;
    let c_hat = parts.coverage;
    if c_hat <= 0.0 {
        // Every capture is a singleton: no overlap to learn from.
        return Err(MseError::ZeroDenominator);
    }
    let k = 1.0 - parts.correction / (3.0 * c_hat);
    let n_hat = if k.abs() < 1e-12 { f64::INFINITY } else { parts.d / (3.0 * c_hat) / k };
    let mut r = EstimateResult::new(Method::Sc, table, n_hat)
        .with_diag("coverage", c_hat)
        .with_diag("d", parts.d)
        .with_diag("remainder", k);
    if k <= 0.0 {
        r.feasible = false;
        r.set_diag("warning", "correction factor is not positive");
    } else if c_hat < LOW_COVERAGE {
        r.set_diag("warning", format!("low sample coverage {c_hat:.4}; estimate may be unstable"));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::builtin_dataset;

    #[test]
    fn uniform_table_gives_eight_c() {
        for c in [1u64, 3, 50] {
            let t = TrsTable::from_counts([c; 7]).unwrap();
            let r = estimate_sc(&t).unwrap();
            assert!((r.n_hat - 8.0 * c as f64).abs() < 1e-9, "{}", r.n_hat);
        }
    }

    #[test]
    fn deployed_value() {
        let r = estimate_sc(&builtin_dataset("als_deployed").unwrap()).unwrap();
        assert!((r.n_hat - 43.88).abs() < 0.01, "{}", r.n_hat);
        let c = r.diagnostics["coverage"].as_f64().unwrap();
        assert!((c - 0.8517).abs() < 1e-4);
    }

    #[test]
    fn errors_and_warnings() {
        let t = TrsTable::from_counts([0, 0, 0, 3, 0, 2, 4]).unwrap();
        assert!(matches!(estimate_sc(&t), Err(MseError::ZeroMargin { list: 1 })));
        let singletons = TrsTable::from_counts([0, 0, 0, 0, 1, 1, 1]).unwrap();
        assert!(estimate_sc(&singletons).is_err());
        let wtc = estimate_sc(&builtin_dataset("wtc").unwrap()).unwrap();
        assert!(!wtc.diagnostics.contains_key("warning"));
        let sparse = TrsTable::from_counts([1, 1, 1, 1, 20, 20, 20]).unwrap();
        assert!(estimate_sc(&sparse).unwrap().diagnostics.contains_key("warning"));
    }
}
