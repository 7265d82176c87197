//! Step 4: maximise the Monte-Carlo complete-data log-likelihood over the
//! population size, with the mixture weights profiled out in closed form.
//!
//! The unseen cell is carried as per-sample regime proportions
//! `W_iu = y000_iu / (N_old − x0)` and resized to each candidate `N`, so the
//! multinomial coefficient and the capture-probability plug-in densities
//! both respond to `N`.

use serde::Serialize;

use super::latent::{raw_shapes, LatentCounts, LatentState, SHAPE_FLOOR, SPLIT_CELLS};
use super::probs::{component_kernels, latent_weights, CaptureProbs, DependenceAlpha, SPLIT_REGIME};
use crate::error::{MseError, Result};
use crate::stochastics::ln_gamma;
use crate::table::TrsTable;

/// One E-step draw: latent partition and the capture probabilities it was
/// sampled under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EStepSample {
    pub latent: LatentCounts,
    pub p: CaptureProbs,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MStepResult {
    pub n: u64,
    pub alpha: DependenceAlpha,
    /// Monte-Carlo objective (up to an `N`-free constant) at the optimum.
    pub objective: f64,
    /// `N*` sits at the lower bound `x0`.
    pub boundary: bool,
    pub evaluations: usize,
}

/// Widest bracket scanned point by point; wider ones are first narrowed by
/// golden-section steps.
pub const SCAN_WIDTH: u64 = 256;

/// Observed-side regime totals of one sample, regimes 0..4.
pub fn seen_regime_totals(table: &TrsTable, y: &LatentCounts) -> [f64; 5] {
    let x = table.counts();
    let first = y.first();
    let mut s = [0.0; 5];
    for u in 0..5 {
        s[u] += y.y111[u] as f64;
    }
    for (c, &cell_idx) in SPLIT_CELLS.iter().enumerate() {
        s[0] += first[c] as f64;
        s[SPLIT_REGIME[c]] += (x[cell_idx] - first[c]) as f64;
    }
    s
}

/// Unseen-cell regime proportions of a sample. When the sample has no unseen
/// individuals the model proportions under its `P` are used.
pub fn unseen_proportions(y: &LatentCounts, alpha: &DependenceAlpha, p: &CaptureProbs) -> [f64; 5] {
    let total: u64 = y.y000.iter().sum();
    if total > 0 {
        y.y000.map(|v| v as f64 / total as f64)
    } else {
        latent_weights(alpha, p).q000
    }
}

/// The per-sample latent partition with the unseen cell resized to `n`.
pub fn state_at(y: &LatentCounts, w: &[f64; 5], x0: u64, n: f64) -> LatentState {
    let unseen = n - x0 as f64;
    LatentState { y000: w.map(|v| v * unseen), ..y.to_state() }
}

struct BetaTerm {
    /// Floored first shape.
    m: f64,
    /// `(m − 1) ln p − ln Γ(m)`, the part that does not move with `N`.
    fixed: f64,
    ln_q: f64,
    /// `n̂ = base + slope · (N − x0)`.
    base: f64,
    slope: f64,
}

impl BetaTerm {
    fn new(m: f64, ln_p: f64, ln_q: f64, base: f64, slope: f64) -> Self {
        let m = m.max(SHAPE_FLOOR);
        Self { m, fixed: (m - 1.0) * ln_p - ln_gamma(m), ln_q, base, slope }
    }

    fn eval(&self, unseen: f64) -> f64 {
        let n = (self.base + self.slope * unseen).max(SHAPE_FLOOR);
        self.fixed + (n - 1.0) * self.ln_q - ln_gamma(n) + ln_gamma(self.m + n)
    }
}

/// Precomputed pieces of the Monte-Carlo objective.
pub struct Objective {
    x0: u64,
    seen_bar: [f64; 5],
    w_bar: [f64; 5],
    /// `mean_i Σ_u W_iu ln G_iu`.
    lg_bar: f64,
    w: Vec<[f64; 5]>,
    list1: BetaTerm,
    lists23: Vec<[BetaTerm; 2]>,
}

impl Objective {
    pub fn new(table: &TrsTable, samples: &[EStepSample], alpha: &DependenceAlpha) -> Result<Self> {
        if samples.is_empty() {
            return Err(MseError::DegenerateObjective("no E-step samples".into()));
        }
        let k = samples.len() as f64;
        let x0 = table.x0();
        let mut seen_bar = [0.0; 5];
        let mut w_bar = [0.0; 5];
        let mut lg_bar = 0.0;
        let mut w = Vec::with_capacity(samples.len());
        let mut lists23 = Vec::with_capacity(samples.len());
        let (mut lp1, mut lq1) = (0.0, 0.0);
        for s in samples {
            let seen = seen_regime_totals(table, &s.latent);
            let wi = unseen_proportions(&s.latent, alpha, &s.p);
            let g = component_kernels(&s.p).k000;
            for u in 0..5 {
                seen_bar[u] += seen[u] / k;
                w_bar[u] += wi[u] / k;
                if wi[u] > 0.0 {
                    lg_bar += wi[u] * g[u].ln() / k;
                }
            }
            let ln_p = s.p.p.map(f64::ln);
            let ln_q = s.p.p.map(|v| (-v).ln_1p());
            lp1 += ln_p[0] / k;
            lq1 += ln_q[0] / k;
            // Shapes with an empty unseen cell give the N-free parts.
            let (m, n0) = raw_shapes(table, &state_at(&s.latent, &wi, x0, x0 as f64), x0 as f64);
            lists23.push([
                BetaTerm::new(m[1], ln_p[1], ln_q[1], n0[1], wi[0] + wi[2] + wi[3]),
                BetaTerm::new(m[2], ln_p[2], ln_q[2], n0[2], wi[0] + wi[1]),
            ]);
            w.push(wi);
        }
        let n1 = table.n1() as f64;
        let list1 = BetaTerm::new(n1, lp1, lq1, x0 as f64 - n1, 1.0);
        Ok(Self { x0, seen_bar, w_bar, lg_bar, w, list1, lists23 })
    }

    pub fn lower_bound(&self) -> u64 {
        self.x0
    }

    /// Regime totals averaged over samples at population size `n`.
    pub fn regime_totals(&self, n: u64) -> [f64; 5] {
        let unseen = (n - self.x0) as f64;
        [0, 1, 2, 3, 4].map(|u| self.seen_bar[u] + self.w_bar[u] * unseen)
    }

    /// Closed-form mixture weights at `n`.
    pub fn alpha_at(&self, n: u64) -> DependenceAlpha {
        let c = self.regime_totals(n);
        let nf = n as f64;
        DependenceAlpha { a: [c[1] / nf, c[2] / nf, c[3] / nf, c[4] / nf] }
    }

    /// Objective at `n` with α profiled out; drops terms that do not depend
    /// on `n`.
    pub fn value(&self, n: u64) -> f64 {
        if n < self.x0 {
            return f64::NEG_INFINITY;
        }
        let nf = n as f64;
        let unseen = nf - self.x0 as f64;
        let k = self.w.len() as f64;
        let mut v = ln_gamma(nf + 1.0) + unseen * self.lg_bar;
        for c in self.regime_totals(n) {
            if c > 0.0 {
                v += c * (c / nf).ln();
            }
        }
        let mut per_sample = 0.0;
        for (wi, terms) in self.w.iter().zip(&self.lists23) {
            for &wu in wi {
                if wu > 0.0 {
                    per_sample -= ln_gamma(wu * unseen + 1.0);
                }
            }
            per_sample += terms[0].eval(unseen) + terms[1].eval(unseen);
        }
        v + per_sample / k + self.list1.eval(unseen)
    }
}

/// Integer maximiser of a unimodal function on `[lb, ∞)`: expand a bracket
/// from `start`, narrow wide brackets by golden section, then scan. Ties go
/// to the smaller argument.
pub fn maximize_integer<F: FnMut(u64) -> f64>(mut f: F, lb: u64, start: u64) -> (u64, f64, usize) {
    let mut evals = 0;
    let mut eval = |n: u64, evals: &mut usize| {
        *evals += 1;
        let v = f(n);
        if v.is_nan() { f64::NEG_INFINITY } else { v }
    };
    let s = start.max(lb);
    let fs = eval(s, &mut evals);
    let up = eval(s + 1, &mut evals);
    let (mut lo, mut hi);
    if up > fs {
        let (mut prev, mut cur, mut fcur, mut step) = (s, s + 1, up, 1u64);
        loop {
            step *= 2;
            let next = cur + step;
            if next > 1 << 40 {
                lo = prev;
                hi = next;
                break;
            }
            let fnext = eval(next, &mut evals);
            if fnext > fcur {
                prev = cur;
                cur = next;
                fcur = fnext;
            } else {
                lo = prev;
                hi = next;
                break;
            }
        }
    } else if s > lb {
        let down = eval(s - 1, &mut evals);
        if down >= fs {
            let (mut prev, mut cur, mut fcur, mut step) = (s, s - 1, down, 1u64);
            loop {
                step *= 2;
                let next = cur.saturating_sub(step).max(lb);
                if next == cur {
                    lo = lb;
                    hi = prev;
                    break;
                }
                let fnext = eval(next, &mut evals);
                if fnext >= fcur {
                    prev = cur;
                    cur = next;
                    fcur = fnext;
                } else {
                    lo = next;
                    hi = prev;
                    break;
                }
            }
        } else {
            lo = s - 1;
            hi = s + 1;
        }
    } else {
        lo = s;
        hi = s + 1;
    }

    // Golden-section narrowing on integers.
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    while hi - lo > SCAN_WIDTH {
        let d = ((hi - lo) as f64 * INV_PHI).round() as u64;
        let a = hi - d;
        let b = lo + d;
        let (fa, fb) = (eval(a, &mut evals), eval(b, &mut evals));
        if fa >= fb {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mut best = (lo, f64::NEG_INFINITY);
    for n in lo..=hi {
        let v = eval(n, &mut evals);
        if v > best.1 {
            best = (n, v);
        }
    }
    (best.0, best.1, evals)
}

/// Step 4 of the fit: `(N*, α*)` maximising the Monte-Carlo objective.
pub fn mstep(table: &TrsTable, samples: &[EStepSample], alpha: &DependenceAlpha, n_current: u64) -> Result<MStepResult> {
    let obj = Objective::new(table, samples, alpha)?;
    let lb = obj.lower_bound();
    let (n, v, evaluations) = maximize_integer(|n| obj.value(n), lb, n_current);
    if !v.is_finite() {
        return Err(MseError::DegenerateObjective(format!("objective not finite near N = {n}")));
    }
    Ok(MStepResult { n, alpha: obj.alpha_at(n), objective: v, boundary: n == lb, evaluations })
}
