//! Poisson log-linear fits over the seven observed cells.
//!
//! All four designs are written in corner-point form, so every non-intercept
//! column vanishes at `(0,0,0)` and the missing cell is extrapolated as
//! `exp(intercept)`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{MseError, Result};
use crate::estimate::{EstimateResult, Method};
use crate::table::{TrsTable, CELL_PATTERNS};

pub const MAX_ITER: usize = 100;
pub const COEF_TOL: f64 = 1e-10;
/// Coefficient magnitude treated as divergence towards the boundary.
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LoglinearModel {
    /// Independence: main effects only.
    Im,
    /// All pairwise interactions, no three-way term.
    Llm,
    /// One common pairwise interaction.
    Qsm,
    /// Free 1-2 interaction, shared 1-3 / 2-3 interaction.
    Pqsm,
}

impl LoglinearModel {
    pub fn method(self) -> Method {
        match self {
            LoglinearModel::Im => Method::Im,
            LoglinearModel::Llm => Method::Llm,
            LoglinearModel::Qsm => Method::Qsm,
            LoglinearModel::Pqsm => Method::Pqsm,
        }
    }

    pub fn from_method(m: Method) -> Option<Self> {
        match m {
            Method::Im => Some(LoglinearModel::Im),
            Method::Llm => Some(LoglinearModel::Llm),
            Method::Qsm => Some(LoglinearModel::Qsm),
            Method::Pqsm => Some(LoglinearModel::Pqsm),
            _ => None,
        }
    }
}

impl fmt::Display for LoglinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.method().name())
    }
}

impl FromStr for LoglinearModel {
    type Err = MseError;
    fn from_str(s: &str) -> Result<Self> {
        let m: Method = s.parse()?;
        LoglinearModel::from_method(m)
            .ok_or_else(|| MseError::Parse(format!("'{s}' is not a log-linear model")))
    }
}

/// One design column evaluated at a capture pattern `(i, j, k)`.
#[derive(Clone, Copy)]
pub struct Column {
    pub name: &'static str,
    pub eval: fn(f64, f64, f64) -> f64,
}

impl fmt::Debug for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub name: String,
    pub columns: Vec<Column>,
}

const INTERCEPT: Column = Column { name: "intercept", eval: |_, _, _| 1.0 };
const U1: Column = Column { name: "u1", eval: |i, _, _| i };
const U2: Column = Column { name: "u2", eval: |_, j, _| j };
const U3: Column = Column { name: "u3", eval: |_, _, k| k };
const U12: Column = Column { name: "u12", eval: |i, j, _| i * j };
const U13: Column = Column { name: "u13", eval: |i, _, k| i * k };
const U23: Column = Column { name: "u23", eval: |_, j, k| j * k };
const U_COMMON: Column = Column { name: "u12=u13=u23", eval: |i, j, k| i * j + i * k + j * k };
const U13_23: Column = Column { name: "u13=u23", eval: |i, j, k| i * k + j * k };

impl DesignSpec {
    pub fn for_model(model: LoglinearModel) -> Self {
        let columns = match model {
            LoglinearModel::Im => vec![INTERCEPT, U1, U2, U3],
            LoglinearModel::Llm => vec![INTERCEPT, U1, U2, U3, U12, U13, U23],
            LoglinearModel::Qsm => vec![INTERCEPT, U1, U2, U3, U_COMMON],
            LoglinearModel::Pqsm => vec![INTERCEPT, U1, U2, U3, U12, U13_23],
        };
        Self { name: model.to_string(), columns }
    }

    /// Custom design; the first column must be the intercept.
    pub fn custom(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        if columns.is_empty() || columns.len() > 7 {
            return Err(MseError::SingularDesign);
        }
        if CELL_PATTERNS.iter().any(|p| (columns[0].eval)(p[0] as f64, p[1] as f64, p[2] as f64) != 1.0) {
            return Err(MseError::Domain("first design column must be the intercept".into()));
        }
        Ok(Self { name: name.into(), columns })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// Rows are the seven observed cells in canonical order.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        CELL_PATTERNS
            .iter()
            .map(|p| {
                self.columns
                    .iter()
                    .map(|c| (c.eval)(p[0] as f64, p[1] as f64, p[2] as f64))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub fitted: [f64; 7],
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Some coefficient diverged past [`SEPARATION_BOUND`].
    pub boundary: bool,
}

impl GlmFit {
    pub fn m000(&self) -> f64 {
        self.coefficients[0].exp()
    }
}

/// In-place Cholesky solve of a small symmetric positive-definite system.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    let scale = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= scale * 1e-14 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

fn poisson_deviance(y: &[f64; 7], mu: &[f64; 7]) -> f64 {
    2.0 * y
        .iter()
        .zip(mu)
        .map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m })
        .sum::<f64>()
}

fn linear_predictor(x: &[Vec<f64>], beta: &[f64]) -> [f64; 7] {
    let mut eta = [0.0; 7];
    for (r, row) in x.iter().enumerate() {
        eta[r] = row.iter().zip(beta).map(|(a, b)| a * b).sum();
    }
    eta
}

/// Poisson log-link maximum likelihood over the seven observed cells.
pub fn irls_fit(counts: &[f64; 7], design: &DesignSpec) -> Result<GlmFit> {
    let x = design.matrix();
    let p = design.ncols();
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(MseError::EmptyTable);
    }
    if total < p as f64 {
        return Err(MseError::Domain(format!(
            "{} observations cannot support {p} design columns",
            total
        )));
    }
    // Rank check on the unweighted cross-product.
    let xtx: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| x.iter().map(|r| r[a] * r[b]).sum()).collect())
        .collect();
    if cholesky_solve(&xtx, &vec![0.0; p]).is_none() {
        return Err(MseError::SingularDesign);
    }

    let mut beta = vec![0.0; p];
    beta[0] = (total / 7.0).ln();
    let mut mu = linear_predictor(&x, &beta).map(f64::exp);
    let mut dev = poisson_deviance(counts, &mu);
    let mut converged = false;
    let mut boundary = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let eta = linear_predictor(&x, &beta);
        let mut xtwx = vec![vec![0.0; p]; p];
        let mut xtwz = vec![0.0; p];
        for r in 0..7 {
            let w = mu[r];
            let z = eta[r] + (counts[r] - mu[r]) / mu[r];
            for a in 0..p {
                xtwz[a] += x[r][a] * w * z;
                for b in 0..p {
                    xtwx[a][b] += x[r][a] * w * x[r][b];
                }
            }
        }
        let target = match cholesky_solve(&xtwx, &xtwz) {
            Some(t) => t,
            None => {
                // Weights collapsed on some cells: the fit is running off to
                // the boundary.
                boundary = true;
                break;
            }
        };
        let mut step = 1.0;
        let mut candidate = target.clone();
        let mut cand_mu = linear_predictor(&x, &candidate).map(f64::exp);
        let mut cand_dev = poisson_deviance(counts, &cand_mu);
        let mut halvings = 0;
        while !(cand_dev.is_finite() && cand_dev <= dev * (1.0 + 1e-12) + 1e-12) && halvings < 40 {
            step *= 0.5;
            halvings += 1;
            candidate = beta.iter().zip(&target).map(|(b, t)| b + step * (t - b)).collect();
            cand_mu = linear_predictor(&x, &candidate).map(f64::exp);
            cand_dev = poisson_deviance(counts, &cand_mu);
        }
        let delta = beta
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = candidate;
        mu = cand_mu;
        dev = cand_dev;
        if beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
            boundary = true;
            break;
        }
        if delta < COEF_TOL {
            converged = true;
            break;
        }
    }

    Ok(GlmFit { coefficients: beta, fitted: mu, deviance: dev.max(0.0), converged, iterations, boundary })
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LoglinearOptions {
    /// Add 0.5 to every observed cell before fitting.
    pub add_half: bool,
}

/// `N̂ = x0 + exp(intercept)` under the chosen log-linear structure.
pub fn estimate_loglinear(table: &TrsTable, model: LoglinearModel, opts: LoglinearOptions) -> Result<EstimateResult> {
    let mut counts = table.counts_f64();
    if opts.add_half {
        counts.iter_mut().for_each(|c| *c += 0.5);
    }
    let design = DesignSpec::for_model(model);
    let fit = irls_fit(&counts, &design)?;
    let m000 = fit.m000();
    let n_hat = table.x0() as f64 + m000;
    let mut r = EstimateResult::new(model.method(), table, n_hat)
        .with_diag("m000", m000)
        .with_diag("deviance", fit.deviance)
        .with_diag("iterations", fit.iterations)
        .with_diag("converged", fit.converged)
        .with_diag("boundary", fit.boundary)
        .with_diag("coefficients", fit.coefficients.clone());
    if opts.add_half {
        r.set_diag("add_half", true);
    }
    if !fit.converged && !fit.boundary {
        r.set_diag("warning", "IRLS stopped at the iteration cap");
    }
    Ok(r)
}

/// Closed-form saturated (no three-way interaction) estimate of the missing cell.
pub fn llm_closed_form_m000(table: &TrsTable) -> Option<f64> {
    let c = table.counts_f64();
    let den = c[1] * c[2] * c[3];
    (den > 0.0).then(|| c[0] * c[4] * c[5] * c[6] / den)
}
