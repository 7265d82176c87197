//! Reference likelihood computations used to audit the fitter: the
//! complete-data likelihood, the exact latent conditional, and the marginal
//! likelihood by tensor-product quadrature over the three capture
//! probabilities.

use super::latent::{BetaShapes, LatentCounts, LatentState, SPLIT_CELLS};
use super::mstep::{state_at, unseen_proportions, EStepSample};
use super::probs::{component_kernels, latent_weights, thbm_cell_probs, CaptureProbs, DependenceAlpha, SPLIT_REGIME};
use crate::error::{MseError, Result};
use crate::stochastics::{ln_gamma, xlogy};
use crate::table::TrsTable;

/// `ln Π_cells (N!/Π y!) Π (weight · kernel)^y` for a (possibly real-valued)
/// latent partition.
pub fn complete_data_loglik(table: &TrsTable, y: &LatentState, n: f64, alpha: &DependenceAlpha, p: &CaptureProbs) -> f64 {
    let w = alpha.regime_weights();
    let k = component_kernels(p);
    let x = table.counts_f64();
    let mut v = ln_gamma(n + 1.0);
    for u in 0..5 {
        v += term(y.y111[u], w[u] * k.k111[u]) + term(y.y000[u], w[u] * k.k000[u]);
    }
    for (c, &cell_idx) in SPLIT_CELLS.iter().enumerate() {
        let first = y.first[c];
        let rest = x[cell_idx] - first;
        v += term(first, w[0] * k.split[c][0]) + term(rest, w[SPLIT_REGIME[c]] * k.split[c][1]);
    }
    v
}

fn term(y: f64, prob: f64) -> f64 {
    xlogy(y, prob) - ln_gamma(y + 1.0)
}

fn ln_binom_pmf(n: u64, k: u64, q: f64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
        + xlogy(k as f64, q)
        + xlogy((n - k) as f64, 1.0 - q)
}

fn ln_multinomial_pmf(counts: &[u64; 5], q: &[f64; 5]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut v = ln_gamma(total as f64 + 1.0);
    for (c, p) in counts.iter().zip(q) {
        v += xlogy(*c as f64, *p) - ln_gamma(*c as f64 + 1.0);
    }
    v
}

/// Log-probability of a latent partition under the conditional sampler.
pub fn latent_log_pmf(table: &TrsTable, y: &LatentCounts, alpha: &DependenceAlpha, p: &CaptureProbs) -> f64 {
    let w = latent_weights(alpha, p);
    let x = table.counts();
    let mut v = ln_multinomial_pmf(&y.y111, &w.q111) + ln_multinomial_pmf(&y.y000, &w.q000);
    for (c, (&cell_idx, first)) in SPLIT_CELLS.iter().zip(y.first()).enumerate() {
        v += ln_binom_pmf(x[cell_idx], first, w.q_first[c]);
    }
    v
}

/// Log-likelihood of the observed table plus unseen cell at fixed `P`.
pub fn observed_loglik(table: &TrsTable, n: u64, alpha: &DependenceAlpha, p: &CaptureProbs) -> f64 {
    let probs = thbm_cell_probs(alpha, p);
    let x0 = table.x0();
    let mut counts = [0u64; 8];
    counts[..7].copy_from_slice(&table.counts());
    counts[7] = n - x0;
    ln_multinomial_coef(&counts) + counts.iter().zip(&probs.p).map(|(c, q)| xlogy(*c as f64, *q)).sum::<f64>()
}

fn ln_multinomial_coef(counts: &[u64; 8]) -> f64 {
    let total: u64 = counts.iter().sum();
    ln_gamma(total as f64 + 1.0) - counts.iter().map(|c| ln_gamma(*c as f64 + 1.0)).sum::<f64>()
}

pub fn beta_log_density(p: &CaptureProbs, shapes: &BetaShapes) -> f64 {
    (0..3)
        .map(|l| {
            let (m, n, x) = (shapes.m[l], shapes.n[l], p.p[l]);
            (m - 1.0) * x.ln() + (n - 1.0) * (-x).ln_1p() - (ln_gamma(m) + ln_gamma(n) - ln_gamma(m + n))
        })
        .sum()
}

/// Full Monte-Carlo objective at `(n, alpha)`: per-sample complete-data
/// log-likelihood plus the beta plug-in density, unseen cells resized to `n`
/// as in the M-step.
pub fn mc_objective(table: &TrsTable, samples: &[EStepSample], alpha_prev: &DependenceAlpha, n: u64, alpha: &DependenceAlpha) -> f64 {
    let x0 = table.x0();
    let nf = n as f64;
    samples
        .iter()
        .map(|s| {
            let w = unseen_proportions(&s.latent, alpha_prev, &s.p);
            let state = state_at(&s.latent, &w, x0, nf);
            let shapes = BetaShapes::compute(table, &state, nf);
            complete_data_loglik(table, &state, nf, alpha, &s.p) + beta_log_density(&s.p, &shapes)
        })
        .sum::<f64>()
        / samples.len() as f64
}

/// Gauss–Jacobi rule for `E[f(P)]` with `P ~ Beta(m, n)`: nodes on `(0, 1)`
/// and weights summing to one, from the eigen-decomposition of the Jacobi
/// matrix. Exact for polynomials of degree below `2r`.
pub fn gauss_jacobi_beta(r: usize, m: f64, n: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(m > 0.0 && n > 0.0) {
        return Err(MseError::InvalidShape(m.min(n)));
    }
    // Weight (1 − t)^a (1 + t)^b on [−1, 1]; P = (1 + t) / 2.
    let (a, b) = (n - 1.0, m - 1.0);
    let ab = a + b;
    let mut jac = nalgebra::DMatrix::<f64>::zeros(r, r);
    for k in 0..r {
        let kf = k as f64;
        jac[(k, k)] = if k == 0 {
            (b - a) / (ab + 2.0)
        } else {
            (b * b - a * a) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        if k + 1 < r {
            let j = kf + 1.0;
            let s = 2.0 * j + ab;
            let off2 = if k == 0 {
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab).powi(2) * (3.0 + ab))
            } else {
                4.0 * j * (j + a) * (j + b) * (j + ab) / (s * s * (s + 1.0) * (s - 1.0))
            };
            jac[(k, k + 1)] = off2.sqrt();
            jac[(k + 1, k)] = off2.sqrt();
        }
    }
    let eig = nalgebra::SymmetricEigen::new(jac);
    let mut rule: Vec<(f64, f64)> = (0..r)
        .map(|i| ((1.0 + eig.eigenvalues[i]) / 2.0, eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    rule.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(rule.into_iter().unzip())
}

fn quadrature(table: &TrsTable, n: u64, alpha: &DependenceAlpha, shapes: &BetaShapes, resolution: usize) -> Result<f64> {
    let mut rules = Vec::with_capacity(3);
    for l in 0..3 {
        rules.push(gauss_jacobi_beta(resolution, shapes.m[l], shapes.n[l])?);
    }
    let mut terms = Vec::with_capacity(resolution.pow(3));
    for (p1, w1) in rules[0].0.iter().zip(&rules[0].1) {
        for (p2, w2) in rules[1].0.iter().zip(&rules[1].1) {
            for (p3, w3) in rules[2].0.iter().zip(&rules[2].1) {
                let p = CaptureProbs::clamped([*p1, *p2, *p3]);
                terms.push(w1.ln() + w2.ln() + w3.ln() + observed_loglik(table, n, alpha, &p));
            }
        }
    }
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return Err(MseError::GridTooCoarse("integrand vanished on every node".into()));
    }
    Ok(mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln())
}

/// Log marginal likelihood of the table at `(N, α)` with the capture
/// probabilities integrated against independent betas. Fails when doubling
/// the node count moves the value by more than `1e-6` in log scale.
pub fn marginal_loglik_oracle(
    table: &TrsTable,
    n: u64,
    alpha: &DependenceAlpha,
    shapes: &BetaShapes,
    resolution: usize,
) -> Result<f64> {
    if n < table.x0() {
        return Err(MseError::Domain(format!("N = {n} below x0 = {}", table.x0())));
    }
    let coarse = quadrature(table, n, alpha, shapes, resolution)?;
    let fine = quadrature(table, n, alpha, shapes, 2 * resolution)?;
    if (fine - coarse).abs() > 1e-6 {
        return Err(MseError::GridTooCoarse(format!(
            "{resolution} vs {} nodes differ by {:.3e}",
            2 * resolution,
            (fine - coarse).abs()
        )));
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::RngStream;
    use crate::thbm::latent::sample_latent;

    #[test]
    fn jacobi_rule_matches_beta_moments() {
        // E[P^k] = Π_{i<k} (m + i) / (m + n + i).
        for (m, n) in [(1.0, 1.0), (0.5, 0.5), (2.5, 7.0), (30.0, 4.0)] {
            let (x, w) = gauss_jacobi_beta(6, m, n).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(x.iter().all(|v| *v > 0.0 && *v < 1.0));
            let mut exact = 1.0;
            for k in 1..12 {
                exact *= (m + (k - 1) as f64) / (m + n + (k - 1) as f64);
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum();
                assert!((q / exact - 1.0).abs() < 1e-10, "m={m} n={n} k={k}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn complete_over_conditional_is_observed() {
        let t = TrsTable::from_counts([2, 1, 3, 1, 2, 0, 4]).unwrap();
        let a = DependenceAlpha::new([0.1, 0.2, 0.05, 0.15]).unwrap();
        let p = CaptureProbs::new([0.3, 0.6, 0.45]).unwrap();
        let mut r = RngStream::new(3, 0);
        let target = observed_loglik(&t, 20, &a, &p);
        for _ in 0..20 {
            let y = sample_latent(&t, 20, &a, &p, &mut r).unwrap();
            let v = complete_data_loglik(&t, &y.to_state(), 20.0, &a, &p) - latent_log_pmf(&t, &y, &a, &p);
            assert!((v - target).abs() < 1e-10, "{v} vs {target}");
        }
    }

    #[test]
    fn uniform_priors_independence() {
        // Table of ones, N = 8: the integral factorises into beta functions.
        let t = TrsTable::from_counts([1; 7]).unwrap();
        let shapes = BetaShapes { m: [1.0; 3], n: [1.0; 3], floored: false };
        let v = marginal_loglik_oracle(&t, 8, &DependenceAlpha::zero(), &shapes, 12).unwrap();
        // Each list: 4 captures and 4 misses, ∫ P^4 (1-P)^4 = B(5,5) = 1/630.
        let coef = ln_gamma(9.0);
        let expected = coef + 3.0 * (1.0f64 / 630.0).ln();
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
    }

    #[test]
    fn point_mass_limit() {
        let t = TrsTable::from_counts([1, 0, 1, 1, 2, 1, 0]).unwrap();
        let a = DependenceAlpha::new([0.1, 0.1, 0.0, 0.2]).unwrap();
        let mean = [0.4, 0.5, 0.3];
        let s = 2e5;
        let shapes = BetaShapes { m: mean.map(|m| m * s), n: mean.map(|m| (1.0 - m) * s), floored: false };
        let v = marginal_loglik_oracle(&t, 10, &a, &shapes, 16).unwrap();
        let fixed = observed_loglik(&t, 10, &a, &CaptureProbs::new(mean).unwrap());
        assert!(((v - fixed).exp() - 1.0).abs() < 1e-4);
    }
}
