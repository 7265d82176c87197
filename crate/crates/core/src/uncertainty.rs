//! Bootstrap variances, log-transform intervals, simulation benchmarks and
//! the incidence-rate helper.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MseError, Result};
use crate::estimate::{round_to, EstimateResult, Method};
use crate::estimators::{run_estimator, EstimatorConfig};
use crate::simgen::{generate, PopulationSpec};
use crate::stochastics::{derive_seed, sample_multinomial, RngStream};
use crate::table::TrsTable;
use crate::thbm::ThbmConfig;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Log-transform interval `(x0 + (N̂−x0)/C, x0 + (N̂−x0)·C)` with
/// `C = exp(z · sqrt(ln(1 + σ²/(N̂−x0)²)))`.
pub fn chao_ci(n_hat: f64, x0: u64, sigma: f64) -> Result<(f64, f64)> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(MseError::Domain(format!("sigma must be a finite non-negative number, got {sigma}")));
    }
    let x0 = x0 as f64;
    let f0 = n_hat - x0;
    if !(f0 > 0.0) || !n_hat.is_finite() {
        return Err(MseError::BoundaryEstimate);
    }
    let c = (Z95 * (1.0 + sigma * sigma / (f0 * f0)).ln().sqrt()).exp();
    Ok((x0 + f0 / c, x0 + f0 * c))
}

/// Relative mean absolute error of a set of estimates.
pub fn rmae(estimates: &[f64], n: f64) -> f64 {
    if estimates.is_empty() {
        return f64::NAN;
    }
    estimates.iter().map(|e| (e - n).abs() / n).sum::<f64>() / estimates.len() as f64
}

/// Average annual cumulative incidence per 100 000 person-years.
pub fn aacir(cases: f64, years: f64, persons: f64) -> Result<f64> {
    if years <= 0.0 || persons <= 0.0 || !years.is_finite() || !persons.is_finite() {
        return Err(MseError::ZeroDenominator);
    }
    Ok(cases / (years * persons) * 1e5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapMode {
    /// Resample `x0` individuals over the seven observed cells.
    #[default]
    Nonparametric,
    /// Resample `round(N̂)` individuals over all eight cells and drop 000.
    Parametric,
}

impl std::str::FromStr for BootstrapMode {
    type Err = MseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonparametric" => Ok(Self::Nonparametric),
            "parametric" => Ok(Self::Parametric),
            o => Err(MseError::Parse(format!("unknown bootstrap mode '{o}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BootstrapConfig {
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
    /// Settings used for THBM replicates.
    pub thbm: ThbmConfig,
}

impl BootstrapConfig {
    pub fn new(b: usize, seed: u64) -> Self {
        Self { b, seed, mode: BootstrapMode::Nonparametric, thbm: ThbmConfig::for_bootstrap(seed) }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub method: Method,
    #[serde(rename = "B")]
    pub b: usize,
    pub mode: BootstrapMode,
    pub seed: u64,
    pub sigma_hat: f64,
    pub ci: Option<(f64, f64)>,
    /// The point estimate sits at or below `x0`; the interval collapses there.
    pub boundary: bool,
    pub failures: usize,
    pub replicates: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thbm_k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thbm_max_iter: Option<usize>,
}

fn resample(table: &TrsTable, point: f64, mode: BootstrapMode, rng: &mut RngStream) -> Result<TrsTable> {
    let x = table.counts_f64();
    let x0 = table.x0();
    match mode {
        BootstrapMode::Nonparametric => {
            let probs: Vec<f64> = x.iter().map(|c| c / x0 as f64).collect();
            let draw = sample_multinomial(x0, &probs, rng)?;
            TrsTable::from_counts(draw.try_into().expect("seven cells"))
        }
        BootstrapMode::Parametric => {
            let n = point.round();
            if !(n >= x0 as f64) {
                return Err(MseError::BoundaryEstimate);
            }
            let mut probs: Vec<f64> = x.iter().map(|c| c / n).collect();
            probs.push((n - x0 as f64) / n);
            let draw = sample_multinomial(n as u64, &probs, rng)?;
            TrsTable::from_counts(draw[..7].try_into().expect("seven cells"))
        }
    }
}

/// Bootstrap around a point estimate with a caller-supplied estimator. The
/// closure receives the resampled table and the replicate index.
pub fn bootstrap_with<F>(table: &TrsTable, point: &EstimateResult, cfg: &BootstrapConfig, estimator: F) -> Result<BootstrapReport>
where
    F: Fn(&TrsTable, u64) -> Result<EstimateResult> + Sync,
{
    if cfg.b == 0 {
        return Err(MseError::Domain("B must be positive".into()));
    }
    let replicates: Vec<Option<f64>> = (0..cfg.b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(cfg.seed, r);
            let t = resample(table, point.n_hat, cfg.mode, &mut rng).ok()?;
            let e = estimator(&t, r).ok()?;
            (e.feasible && e.n_hat.is_finite()).then_some(e.n_hat)
        })
        .collect();
    let ok: Vec<f64> = replicates.iter().flatten().copied().collect();
    let failures = cfg.b - ok.len();
    if 2 * failures > cfg.b {
        return Err(MseError::TooManyFailures { failed: failures, total: cfg.b });
    }
    let sigma_hat = if ok.len() > 1 {
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (ci, boundary) = if !point.feasible {
        (None, false)
    } else {
        match chao_ci(point.n_hat, table.x0(), sigma_hat) {
            Ok(ci) => (Some(ci), false),
            Err(MseError::BoundaryEstimate) => (Some((table.x0() as f64, table.x0() as f64)), true),
            Err(e) => return Err(e),
        }
    };
    Ok(BootstrapReport {
        method: point.method,
        b: cfg.b,
        mode: cfg.mode,
        seed: cfg.seed,
        sigma_hat,
        ci,
        boundary,
        failures,
        replicates,
        thbm_k: None,
        thbm_max_iter: None,
    })
}

/// Point estimate plus bootstrap for a named method; the CI is attached to the
/// returned estimate.
pub fn bootstrap_method(
    table: &TrsTable,
    method: Method,
    est: &EstimatorConfig,
    cfg: &BootstrapConfig,
) -> Result<(EstimateResult, BootstrapReport)> {
    let mut point = run_estimator(table, method, est)?;
    let report = bootstrap_estimate(table, &mut point, est, cfg)?;
    Ok((point, report))
}

/// Bootstraps an existing point estimate and attaches the interval to it.
pub fn bootstrap_estimate(
    table: &TrsTable,
    point: &mut EstimateResult,
    est: &EstimatorConfig,
    cfg: &BootstrapConfig,
) -> Result<BootstrapReport> {
    let report = bootstrap_point(table, point, est, cfg)?;
    if let Some((lo, hi)) = report.ci {
        point.set_ci(lo, hi);
    }
    if report.boundary {
        point.set_diag("ci_boundary", true);
    }
    Ok(report)
}

fn bootstrap_point(table: &TrsTable, point: &EstimateResult, est: &EstimatorConfig, cfg: &BootstrapConfig) -> Result<BootstrapReport> {
    let method = point.method;
    let mut report = bootstrap_with(table, point, cfg, |t, r| {
        let mut e = *est;
        if method == Method::Thbm {
            e.thbm = ThbmConfig { seed: cfg.thbm.seed.wrapping_add(r + 1), ..cfg.thbm };
        }
        run_estimator(t, method, &e)
    })?;
    if method == Method::Thbm {
        report.thbm_k = Some(cfg.thbm.k);
        report.thbm_max_iter = Some(cfg.thbm.max_iter);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BenchmarkConfig {
    pub reps: usize,
    /// Bootstrap replicates per simulated dataset.
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    /// THBM settings inside the per-replicate bootstrap.
    pub bootstrap_thbm: ThbmConfig,
}

impl BenchmarkConfig {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            reps,
            b: 200,
            seed,
            estimator: EstimatorConfig::default(),
            bootstrap_thbm: ThbmConfig::for_bootstrap(seed),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub method: Method,
    #[serde(rename = "RMAE")]
    pub rmae: f64,
    #[serde(rename = "CP")]
    pub cp: f64,
    /// Mean interval length divided by `N`.
    #[serde(rename = "LCI")]
    pub lci: f64,
    pub infeasible_rate: f64,
    /// Replicates where the estimator itself errored.
    pub errors: usize,
    /// Feasible replicates whose bootstrap produced no interval.
    pub ci_failures: usize,
    pub feasible: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub population: serde_json::Value,
    #[serde(rename = "N")]
    pub n: u64,
    pub reps: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub rows: Vec<BenchmarkRow>,
    /// Simulated datasets that could not be built (no one captured).
    pub empty_datasets: usize,
}

impl BenchmarkReport {
    pub fn row(&self, m: Method) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.method == m)
    }

    /// CSV with columns method, RMAE, CP, LCI, infeasible_rate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "RMAE", "CP", "LCI", "infeasible_rate"])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                fmt_metric(r.rmae),
                fmt_metric(r.cp),
                fmt_metric(r.lci),
                fmt_metric(r.infeasible_rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{}", round_to(v, 6))
    } else {
        "NA".into()
    }
}

/// Outcome of one method on one simulated dataset.
#[derive(Debug, Clone, Copy)]
enum Outcome {
    Error,
    Infeasible,
    Feasible { n_hat: f64, ci: Option<(f64, f64)> },
}

fn run_replicate(table: &TrsTable, n: u64, method: Method, rep: u64, cfg: &BenchmarkConfig) -> Outcome {
    if method == Method::Truth {
        let v = n as f64;
        return Outcome::Feasible { n_hat: v, ci: Some((v, v)) };
    }
    let mut est = cfg.estimator;
    est.thbm.seed = derive_seed(cfg.seed, &[rep, 1]);
    let point = match run_estimator(table, method, &est) {
        Ok(p) => p,
        Err(_) => return Outcome::Error,
    };
    if !point.feasible {
        return Outcome::Infeasible;
    }
    let boot_seed = derive_seed(cfg.seed, &[rep, 2, method as u64]);
    let mut bcfg = BootstrapConfig::new(cfg.b, boot_seed);
    bcfg.thbm = ThbmConfig { seed: boot_seed, ..cfg.bootstrap_thbm };
    let ci = bootstrap_point(table, &point, &est, &bcfg).ok().and_then(|r| r.ci);
    Outcome::Feasible { n_hat: point.n_hat, ci }
}

/// Simulate `reps` datasets and score every method on each.
pub fn benchmark(spec: &PopulationSpec, methods: &[Method], cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    if cfg.reps == 0 {
        return Err(MseError::Domain("reps must be positive".into()));
    }
    let n = spec.n;
    let per_rep: Vec<Option<Vec<Outcome>>> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let sim = generate(spec, &mut RngStream::new(cfg.seed, rep)).ok()?;
            Some(methods.iter().map(|&m| run_replicate(&sim.table, n, m, rep, cfg)).collect())
        })
        .collect();
    let empty_datasets = per_rep.iter().filter(|r| r.is_none()).count();
    let nf = n as f64;
    let rows = methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let outcomes: Vec<Outcome> = per_rep.iter().flatten().map(|o| o[j]).collect();
            let mut estimates = Vec::new();
            let (mut covered, mut with_ci, mut len, mut errors, mut infeasible, mut ci_failures) = (0, 0, 0.0, 0, 0, 0);
            for o in &outcomes {
                match *o {
                    Outcome::Error => errors += 1,
                    Outcome::Infeasible => infeasible += 1,
                    Outcome::Feasible { n_hat, ci } => {
                        estimates.push(n_hat);
                        match ci {
                            Some((lo, hi)) => {
                                with_ci += 1;
                                len += (hi - lo) / nf;
                                if lo <= nf && nf <= hi {
                                    covered += 1;
                                }
                            }
                            None => ci_failures += 1,
                        }
                    }
                }
            }
            let total = outcomes.len().max(1) as f64;
            BenchmarkRow {
                method,
                rmae: rmae(&estimates, nf),
                cp: if with_ci > 0 { covered as f64 / with_ci as f64 } else { f64::NAN },
                lci: if with_ci > 0 { len / with_ci as f64 } else { f64::NAN },
                infeasible_rate: infeasible as f64 / total,
                errors,
                ci_failures,
                feasible: estimates.len(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        population: serde_json::from_str(&spec.to_json_string())?,
        n,
        reps: cfg.reps,
        b: cfg.b,
        seed: cfg.seed,
        rows,
        empty_datasets,
    })
}
