use serde::Serialize;

use crate::error::{MseError, Result};
use crate::table::CellProbabilities;

/// Capture probabilities are kept this far inside `(0, 1)`.
pub const P_CLAMP: f64 = 1e-12;

/// Mixture weights of the four copy regimes; `a0` is their sum and `1 − a0`
/// the weight of independent behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DependenceAlpha {
    pub a: [f64; 4],
}

impl DependenceAlpha {
    pub fn new(a: [f64; 4]) -> Result<Self> {
        if a.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(MseError::Domain(format!("alpha components must be non-negative: {a:?}")));
        }
        let s: f64 = a.iter().sum();
        if s > 1.0 + 1e-9 {
            return Err(MseError::Domain(format!("alpha components sum to {s} > 1")));
        }
        Ok(Self { a })
    }

    pub fn zero() -> Self {
        Self { a: [0.0; 4] }
    }

    pub fn a0(&self) -> f64 {
        self.a.iter().sum()
    }

    /// `(1 − a0, a1, a2, a3, a4)`.
    pub fn regime_weights(&self) -> [f64; 5] {
        let [a1, a2, a3, a4] = self.a;
        [(1.0 - self.a0()).max(0.0), a1, a2, a3, a4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaptureProbs {
    pub p: [f64; 3],
}

impl CaptureProbs {
    /// Rejects values outside `[0, 1]`; clamps the rest into the open interval.
    pub fn new(p: [f64; 3]) -> Result<Self> {
        for &v in &p {
            if !(0.0..=1.0).contains(&v) {
                return Err(MseError::InvalidProbability(v));
            }
        }
        Ok(Self::clamped(p))
    }

    pub(crate) fn clamped(p: [f64; 3]) -> Self {
        Self { p: p.map(|v| v.clamp(P_CLAMP, 1.0 - P_CLAMP)) }
    }
}

/// Regime-specific products of `P`/`1 − P` for every component of every
/// cell (mixture weights excluded).
#[derive(Debug, Clone, Copy)]
pub struct ComponentKernels {
    pub k111: [f64; 5],
    pub k000: [f64; 5],
    /// `[regime-0 kernel, dependent kernel]` for 110, 011, 100, 101, 010, 001.
    pub split: [[f64; 2]; 6],
}

/// Regime of the dependent component of each two-component cell, in the
/// order 110, 011, 100, 101, 010, 001.
pub const SPLIT_REGIME: [usize; 6] = [1, 2, 2, 3, 3, 1];

pub fn component_kernels(p: &CaptureProbs) -> ComponentKernels {
    let [p1, p2, p3] = p.p;
    let (q1, q2, q3) = (1.0 - p1, 1.0 - p2, 1.0 - p3);
    ComponentKernels {
        k111: [p1 * p2 * p3, p1 * p3, p1 * p2, p1 * p2, p1],
        k000: [q1 * q2 * q3, q1 * q3, q1 * q2, q1 * q2, q1],
        split: [
            [p1 * p2 * q3, p1 * q3],
            [q1 * p2 * p3, q1 * p2],
            [p1 * q2 * q3, p1 * q2],
            [p1 * q2 * p3, p1 * q2],
            [q1 * p2 * q3, q1 * p2],
            [q1 * q2 * p3, q1 * p3],
        ],
    }
}

/// The eight cell probabilities in canonical order (000 last).
pub fn thbm_cell_probs(alpha: &DependenceAlpha, p: &CaptureProbs) -> CellProbabilities {
    let w = alpha.regime_weights();
    let k = component_kernels(p);
    let mix5 = |ker: &[f64; 5]| ker.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let mix2 = |c: usize| w[0] * k.split[c][0] + w[SPLIT_REGIME[c]] * k.split[c][1];
    let probs = [mix5(&k.k111), mix2(0), mix2(3), mix2(1), mix2(2), mix2(4), mix2(5), mix5(&k.k000)];
    CellProbabilities { p: probs }
}

/// Normalized component probabilities used by the latent samplers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentWeights {
    pub q111: [f64; 5],
    pub q000: [f64; 5],
    /// Probability that a member of each two-component cell belongs to the
    /// independent regime.
    pub q_first: [f64; 6],
}

fn normalize5(v: [f64; 5]) -> [f64; 5] {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.map(|x| x / s)
    } else {
        [1.0, 0.0, 0.0, 0.0, 0.0]
    }
}

pub fn latent_weights(alpha: &DependenceAlpha, p: &CaptureProbs) -> LatentWeights {
    let w = alpha.regime_weights();
    let k = component_kernels(p);
    let mul = |ker: [f64; 5]| [ker[0] * w[0], ker[1] * w[1], ker[2] * w[2], ker[3] * w[3], ker[4] * w[4]];
    let mut q_first = [1.0; 6];
    for c in 0..6 {
        let a = w[0] * k.split[c][0];
        let b = w[SPLIT_REGIME[c]] * k.split[c][1];
        // A cell both components give zero mass is impossible under the model;
        // its members are assigned to the independent regime.
        if a + b > 0.0 {
            q_first[c] = a / (a + b);
        }
    }
    LatentWeights { q111: normalize5(mul(k.k111)), q000: normalize5(mul(k.k000)), q_first }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_symmetric() {
        let c = thbm_cell_probs(&DependenceAlpha::zero(), &CaptureProbs::new([0.5; 3]).unwrap());
        for v in c.p {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn regime_one_only() {
        let a = DependenceAlpha::new([1.0, 0.0, 0.0, 0.0]).unwrap();
        let c = thbm_cell_probs(&a, &CaptureProbs::new([0.5, 0.3, 0.5]).unwrap());
        assert!((c.p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn full_dependence_collapse() {
        let a = DependenceAlpha::new([0.0, 0.0, 0.0, 1.0]).unwrap();
        let c = thbm_cell_probs(&a, &CaptureProbs::new([0.37, 0.8, 0.1]).unwrap());
        assert!((c.p[0] - 0.37).abs() < 1e-15);
        assert!((c.p[7] - 0.63).abs() < 1e-15);
        for v in &c.p[1..7] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn q_formulas() {
        let a = DependenceAlpha::new([0.5, 0.0, 0.0, 0.0]).unwrap();
        let w = latent_weights(&a, &CaptureProbs::new([0.4, 0.5, 0.7]).unwrap());
        assert!((w.q_first[0] - 1.0 / 3.0).abs() < 1e-12);
        let z = latent_weights(&DependenceAlpha::zero(), &CaptureProbs::new([0.4, 0.5, 0.7]).unwrap());
        assert_eq!(z.q_first, [1.0; 6]);
        assert_eq!(z.q111, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(z.q000, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn validation() {
        assert!(DependenceAlpha::new([0.5, 0.6, 0.0, 0.0]).is_err());
        assert!(DependenceAlpha::new([-0.1, 0.0, 0.0, 0.0]).is_err());
        assert!(CaptureProbs::new([1.1, 0.5, 0.5]).is_err());
        assert_eq!(CaptureProbs::new([0.0, 1.0, 0.5]).unwrap().p[0], P_CLAMP);
    }
}
