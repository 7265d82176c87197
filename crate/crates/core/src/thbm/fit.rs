//! Monte-Carlo EM: alternate K draws of `(P, y)` with the closed-form /
//! integer-search M-step until a moving window of iterates settles.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::latent::{sample_capture_probs, sample_latent, BetaShapes, LatentState, PCond};
use super::mstep::{mstep, unseen_proportions, EStepSample};
use super::oracle::mc_objective;
use super::probs::{CaptureProbs, DependenceAlpha};
use crate::error::{MseError, Result};
use crate::estimate::{EstimateResult, Method};
use crate::loglinear::llm_closed_form_m000;
use crate::stochastics::RngStream;
use crate::table::TrsTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThbmConfig {
    /// E-step samples per iteration.
    pub k: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub pcond: PCond,
    /// Moving-average window for the stopping rule and the reported estimate.
    pub window: usize,
}

impl Default for ThbmConfig {
    fn default() -> Self {
        Self { k: 1000, max_iter: 500, tol: 1e-3, seed: 0, pcond: PCond::Plugin, window: 5 }
    }
}

impl ThbmConfig {
    /// Reduced settings used inside bootstrap loops.
    pub fn for_bootstrap(seed: u64) -> Self {
        Self { k: 200, max_iter: 100, seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub n: u64,
    pub alpha: [f64; 4],
    pub objective: f64,
    /// Monte-Carlo standard error of the objective.
    pub objective_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThbmFit {
    /// Window average of `N`, rounded.
    pub n_hat: f64,
    pub n_window_mean: f64,
    pub alpha_hat: DependenceAlpha,
    pub shapes: BetaShapes,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub k: usize,
    /// Iterations whose `N*` was the lower bound `x0`.
    pub boundary_iterations: usize,
    /// Objective moving average fell by more than three standard errors.
    pub objective_drop: bool,
    pub shapes_floored: bool,
}

impl ThbmFit {
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "N", "alpha1", "alpha2", "alpha3", "alpha4", "objective"])?;
        for r in &self.trace {
            w.write_record([
                r.iteration.to_string(),
                r.n.to_string(),
                r.alpha[0].to_string(),
                r.alpha[1].to_string(),
                r.alpha[2].to_string(),
                r.alpha[3].to_string(),
                r.objective.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_trace_csv(&self, path: &Path) -> Result<()> {
        self.write_trace_csv(std::fs::File::create(path)?)
    }
}

/// `N⁽⁰⁾`: observed count plus the no-three-way-interaction fill, or `2·x0`
/// when that fill is undefined.
pub fn initial_n(table: &TrsTable) -> u64 {
    let x0 = table.x0();
    match llm_closed_form_m000(table) {
        Some(m) if m.is_finite() => x0 + m.round() as u64,
        _ => 2 * x0,
    }
}

fn iteration_stream(seed: u64, iteration: usize) -> RngStream {
    RngStream::new(seed, iteration as u64)
}

pub fn fit_thbm(table: &TrsTable, config: &ThbmConfig) -> Result<ThbmFit> {
    if config.k == 0 || config.max_iter == 0 || config.window == 0 {
        return Err(MseError::Domain("K, max_iter and window must be positive".into()));
    }
    let x0 = table.x0();
    if x0 == 0 {
        return Err(MseError::EmptyTable);
    }
    let window = config.window;

    let mut n = initial_n(table);
    let mut alpha = DependenceAlpha { a: [0.1; 4] };
    let margins = table.margins().map(|m| (m as f64 / n as f64).clamp(0.01, 0.99));
    let start = LatentState::expected(table, n as f64, &alpha, &CaptureProbs::clamped(margins));
    let mut states = vec![start; config.k];

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut converged = false;
    let mut boundary_iterations = 0;
    let mut objective_drop = false;
    let mut shapes_floored = false;
    let mut last_shapes = BetaShapes::compute(table, &start, n as f64);

    for iteration in 1..=config.max_iter {
        let base = iteration_stream(config.seed, iteration);
        let draws: Vec<Result<(EStepSample, BetaShapes)>> = states
            .par_iter()
            .enumerate()
            .map(|(i, state)| {
                let mut rng = base.child(i as u64);
                let shapes = BetaShapes::compute(table, state, n as f64);
                let p = sample_capture_probs(&shapes, config.pcond, &mut rng)?;
                let latent = sample_latent(table, n, &alpha, &p, &mut rng)?;
                Ok((EStepSample { latent, p }, shapes))
            })
            .collect();
        let mut samples = Vec::with_capacity(config.k);
        for d in draws {
            let (s, shapes) = d?;
            shapes_floored |= shapes.floored;
            last_shapes = shapes;
            samples.push(s);
        }

        let res = mstep(table, &samples, &alpha, n)?;
        if res.boundary {
            boundary_iterations += 1;
        }
        let (objective, objective_se) = objective_stats(table, &samples, &alpha, res.n, &res.alpha);
        let alpha_prev = alpha;
        n = res.n;
        alpha = res.alpha;
        states = samples
            .iter()
            .map(|s| {
                let w = unseen_proportions(&s.latent, &alpha_prev, &s.p);
                LatentState { y000: w.map(|v| v * (n - x0) as f64), ..s.latent.to_state() }
            })
            .collect();
        trace.push(TraceRow { iteration, n, alpha: alpha.a, objective, objective_se });

        if trace.len() >= 2 * window {
            let t = trace.len();
            let objective_ma = |end: usize| trace[end - window..end].iter().map(|r| r.objective).sum::<f64>() / window as f64;
            if objective_ma(t) < objective_ma(t - 1) - 3.0 * objective_se {
                objective_drop = true;
            }
            // Consecutive moving averages differ by (x_t − x_{t−w}) / w.
            let dn = (trace[t - 1].n as f64 - trace[t - 1 - window].n as f64).abs() / window as f64;
            let da = (0..4)
                .map(|s| (trace[t - 1].alpha[s] - trace[t - 1 - window].alpha[s]).abs() / window as f64)
                .fold(0.0, f64::max);
            if dn < config.tol * x0 as f64 && da < config.tol {
                converged = true;
                break;
            }
        }
    }

    let tail = &trace[trace.len().saturating_sub(window)..];
    let n_window_mean = tail.iter().map(|r| r.n as f64).sum::<f64>() / tail.len() as f64;
    let mut a = [0.0; 4];
    for r in tail {
        for s in 0..4 {
            a[s] += r.alpha[s] / tail.len() as f64;
        }
    }
    Ok(ThbmFit {
        n_hat: n_window_mean.round().max(x0 as f64),
        n_window_mean,
        alpha_hat: DependenceAlpha { a },
        shapes: last_shapes,
        trace,
        converged,
        k: config.k,
        boundary_iterations,
        objective_drop,
        shapes_floored,
    })
}

fn objective_stats(
    table: &TrsTable,
    samples: &[EStepSample],
    alpha_prev: &DependenceAlpha,
    n: u64,
    alpha: &DependenceAlpha,
) -> (f64, f64) {
    let vals: Vec<f64> = samples
        .iter()
        .map(|s| mc_objective(table, std::slice::from_ref(s), alpha_prev, n, alpha))
        .collect();
    let k = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / k;
    let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
    (mean, (var / k).sqrt())
}

pub fn estimate_thbm(table: &TrsTable, config: &ThbmConfig) -> Result<EstimateResult> {
    Ok(fit_thbm(table, config)?.to_estimate(table, config))
}

impl ThbmFit {
    /// Summary row for reports; `config` is the one the fit ran with.
    pub fn to_estimate(&self, table: &TrsTable, config: &ThbmConfig) -> EstimateResult {
        let mut r = EstimateResult::new(Method::Thbm, table, self.n_hat)
            .with_diag("n_window_mean", self.n_window_mean)
            .with_diag("alpha", self.alpha_hat.a.to_vec())
            .with_diag("alpha0", self.alpha_hat.a0())
            .with_diag("iterations", self.trace.len())
            .with_diag("converged", self.converged)
            .with_diag("K", self.k)
            .with_diag("seed", config.seed)
            .with_diag("pcond", serde_json::to_value(config.pcond).unwrap_or_default())
            .with_diag("boundary_iterations", self.boundary_iterations);
        if !self.converged {
            r.set_diag("warning", "MCEM hit max_iter before the moving window settled");
        }
        if self.objective_drop {
            r.set_diag("objective_drop", true);
        }
        if self.shapes_floored {
            r.set_diag("shapes_floored", true);
        }
        r
    }
}
