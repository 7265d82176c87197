//! Time plus behavioural-response model M_tb with a constant
//! recapture/first-capture ratio φ.

use serde::Serialize;

use crate::error::{MseError, Result};
use crate::estimate::{EstimateResult, Method};
use crate::optimize::{nelder_mead, Minimum, NelderMeadOptions};
use crate::stochastics::{ln_gamma, logistic};
use crate::table::TrsTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[allow(non_snake_case)]
pub struct MtbStats {
    pub u1: u64,
    pub u2: u64,
    pub u3: u64,
    pub m2: u64,
    pub m3: u64,
    pub M2: u64,
    pub M3: u64,
    pub M4: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MtbParams {
    pub n: f64,
    pub f: [f64; 3],
    pub phi: f64,
}

pub fn mtb_stats(table: &TrsTable) -> MtbStats {
    let u1 = table.n1();
    let u2 = table.x011() + table.x010();
    MtbStats {
        u1,
        u2,
        u3: table.x001(),
        m2: table.x111() + table.x110(),
        m3: table.x111() + table.x101() + table.x011(),
        M2: u1,
        M3: u1 + u2,
        M4: table.x0(),
    }
}

#[inline]
fn xlog(k: f64, v: f64) -> f64 {
    if k == 0.0 { 0.0 } else { k * v.ln() }
}

/// Log-likelihood with factorials through log-gamma. Requires `N ≥ x0`,
/// `f_l ∈ (0,1)` and `φ f_l < 1` for lists 2 and 3.
pub fn mtb_loglik(p: &MtbParams, s: &MtbStats) -> Result<f64> {
    let x0 = s.M4 as f64;
    if !(p.n >= x0) || !p.n.is_finite() {
        return Err(MseError::Domain(format!("N = {} below x0 = {x0}", p.n)));
    }
    if p.f.iter().any(|&f| !(f > 0.0 && f < 1.0)) || !(p.phi > 0.0) {
        return Err(MseError::Domain("capture probabilities or phi out of range".into()));
    }
    if p.phi * p.f[1] >= 1.0 || p.phi * p.f[2] >= 1.0 {
        return Err(MseError::Domain("phi * f_l must stay below 1".into()));
    }
    Ok(loglik_unchecked(p.n, p.f, p.phi, s))
}

fn loglik_unchecked(n: f64, f: [f64; 3], phi: f64, s: &MtbStats) -> f64 {
    let x0 = s.M4 as f64;
    let u1 = s.u1 as f64;
    let mut v = ln_gamma(n + 1.0) - ln_gamma(n - x0 + 1.0)
        + xlog(u1, f[0])
        + xlog(n - u1, 1.0 - f[0])
        + xlog((s.m2 + s.m3) as f64, phi);
    let terms = [(s.u2, s.m2, s.M2, s.M3), (s.u3, s.m3, s.M3, s.M4)];
    for (l, (u, m, ml, mnext)) in terms.into_iter().enumerate() {
        let fl = f[l + 1];
        v += xlog((u + m) as f64, fl) + xlog(n - mnext as f64, 1.0 - fl) + xlog((ml - m) as f64, 1.0 - phi * fl);
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub struct MtbConfig {
    pub nelder_mead: NelderMeadOptions,
}

impl Default for MtbConfig {
    fn default() -> Self {
        Self { nelder_mead: NelderMeadOptions { step: 1.0, ..NelderMeadOptions::default() } }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MtbFit {
    pub params: MtbParams,
    pub loglik: f64,
    pub boundary: bool,
    pub starts_converged: usize,
}

/// Transformed coordinates: `(ln(N − x0 + 1), logit f1..f3, ln φ)`.
fn unpack(t: &[f64], x0: f64) -> MtbParams {
    MtbParams {
        n: x0 - 1.0 + t[0].exp(),
        f: [logistic(t[1]), logistic(t[2]), logistic(t[3])],
        phi: t[4].exp(),
    }
}

fn negloglik(t: &[f64], s: &MtbStats) -> f64 {
    let p = unpack(t, s.M4 as f64);
    match mtb_loglik(&p, s) {
        Ok(v) => -v,
        Err(_) => f64::INFINITY,
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn starts(s: &MtbStats) -> Vec<Vec<f64>> {
    let x0 = s.M4 as f64;
    let mut out = Vec::new();
    for (scale, phi) in [(1.5f64, 1.0f64), (1.1, 0.8), (3.0, 1.2), (1.01, 0.5), (10.0, 1.0)] {
        let n = x0 * scale + 1.0;
        let f1 = ((s.u1 as f64 + 0.5) / n).clamp(0.02, 0.95);
        let f2 = ((s.u2 + s.m2) as f64 + 0.5) / n;
        let f3 = ((s.u3 + s.m3) as f64 + 0.5) / n;
        let cap = 0.95 / phi;
        let f2 = f2.clamp(0.02, cap.min(0.95));
        let f3 = f3.clamp(0.02, cap.min(0.95));
        out.push(vec![(n - x0 + 1.0).ln(), logit(f1), logit(f2), logit(f3), phi.ln()]);
    }
    out
}

fn polish<F: FnMut(&[f64]) -> f64>(mut f: F, start: &[f64], opts: NelderMeadOptions) -> Minimum {
    let mut best = nelder_mead(&mut f, start, opts);
    // Restart from the incumbent until it stops moving; plain Nelder–Mead can
    // stall on ridges.
    for _ in 0..5 {
        let next = nelder_mead(&mut f, &best.x, NelderMeadOptions { step: opts.step * 0.1, ..opts });
        let improved = next.fx < best.fx - 1e-12;
        let evals = best.evals + next.evals;
        if next.fx <= best.fx {
            best = Minimum { evals, ..next };
        }
        if !improved {
            break;
        }
    }
    best
}

pub fn fit_mtb(table: &TrsTable, config: &MtbConfig) -> Result<MtbFit> {
    let s = mtb_stats(table);
    if s.M4 == 0 {
        return Err(MseError::EmptyTable);
    }
    let mut best: Option<Minimum> = None;
    let mut converged = 0;
    for start in starts(&s) {
        let m = polish(|t| negloglik(t, &s), &start, config.nelder_mead);
        if !m.fx.is_finite() {
            continue;
        }
        if m.converged {
            converged += 1;
        }
        if best.as_ref().is_none_or(|b| m.fx < b.fx) {
            best = Some(m);
        }
    }
    let best = match best {
        Some(b) if converged > 0 => b,
        _ => return Err(MseError::NonConvergence("no M_tb start reached a finite optimum".into())),
    };
    let params = unpack(&best.x, s.M4 as f64);
    Ok(MtbFit {
        params,
        loglik: -best.fx,
        boundary: params.n - (s.M4 as f64) < 0.5,
        starts_converged: converged,
    })
}

/// Inner maximisation over `(f, φ)` with `N` held fixed.
pub fn mtb_profile(stats: &MtbStats, n: f64, config: &MtbConfig) -> Result<(f64, MtbParams)> {
    let x0 = stats.M4 as f64;
    if n < x0 {
        return Err(MseError::Domain(format!("N = {n} below x0 = {x0}")));
    }
    let t0 = (n - x0 + 1.0).ln();
    let mut best: Option<Minimum> = None;
    for st in starts(stats) {
        let m = polish(
            |t| negloglik(&[t0, t[0], t[1], t[2], t[3]], stats),
            &st[1..],
            config.nelder_mead,
        );
        if best.as_ref().is_none_or(|b| m.fx < b.fx) {
            best = Some(m);
        }
    }
    let b = best.unwrap();
    if !b.fx.is_finite() {
        return Err(MseError::NonConvergence(format!("profile at N = {n}")));
    }
    let p = unpack(&[t0, b.x[0], b.x[1], b.x[2], b.x[3]], x0);
    Ok((-b.fx, p))
}

pub fn estimate_mtb(table: &TrsTable, config: &MtbConfig) -> Result<EstimateResult> {
    let fit = fit_mtb(table, config)?;
    let x0 = table.x0() as f64;
    let n_hat = fit.params.n.round().max(x0);
    Ok(EstimateResult::new(Method::Mtb, table, n_hat)
        .with_diag("n_continuous", fit.params.n)
        .with_diag("f", fit.params.f.to_vec())
        .with_diag("phi", fit.params.phi)
        .with_diag("loglik", fit.loglik)
        .with_diag("boundary", fit.boundary)
        .with_diag("starts_converged", fit.starts_converged))
}
