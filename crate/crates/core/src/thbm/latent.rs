use rand::Rng;
use serde::{Deserialize, Serialize};

use super::probs::{latent_weights, CaptureProbs, DependenceAlpha, LatentWeights};
use crate::error::{MseError, Result};
use crate::stochastics::{sample_beta, sample_binomial, sample_multinomial};
use crate::table::{cell, TrsTable};

/// Observed cells with two mixture components, in the order used by
/// [`LatentCounts::first`].
pub const SPLIT_CELLS: [usize; 6] = [cell::X110, cell::X011, cell::X100, cell::X101, cell::X010, cell::X001];

/// Per-regime partition of the observed cells plus the unseen cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentCounts {
    pub y111: [u64; 5],
    pub y000: [u64; 5],
    pub y110_1: u64,
    pub y011_1: u64,
    pub y100_1: u64,
    pub y101_1: u64,
    pub y010_1: u64,
    pub y001_1: u64,
}

impl LatentCounts {
    /// Independent-regime counts in [`SPLIT_CELLS`] order.
    pub fn first(&self) -> [u64; 6] {
        [self.y110_1, self.y011_1, self.y100_1, self.y101_1, self.y010_1, self.y001_1]
    }

    pub fn to_state(&self) -> LatentState {
        LatentState {
            y111: self.y111.map(|v| v as f64),
            y000: self.y000.map(|v| v as f64),
            first: self.first().map(|v| v as f64),
        }
    }

    /// Checks the partition constraints against a table and population size.
    pub fn check(&self, table: &TrsTable, n: u64) -> Result<()> {
        let x0 = table.x0();
        if n < x0 {
            return Err(MseError::Domain(format!("N = {n} below x0 = {x0}")));
        }
        if self.y111.iter().sum::<u64>() != table.x111() {
            return Err(MseError::Domain("y111 does not sum to x111".into()));
        }
        if self.y000.iter().sum::<u64>() != n - x0 {
            return Err(MseError::Domain("y000 does not sum to N - x0".into()));
        }
        for (c, f) in SPLIT_CELLS.iter().zip(self.first()) {
            if f > table.counts()[*c] {
                return Err(MseError::Domain("split count exceeds its cell".into()));
            }
        }
        Ok(())
    }
}

/// Real-valued latent partition: initial expected splits and unseen counts
/// rescaled to a new `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatentState {
    pub y111: [f64; 5],
    pub y000: [f64; 5],
    /// Independent-regime parts in [`SPLIT_CELLS`] order.
    pub first: [f64; 6],
}

impl LatentState {
    /// Expected partition under the given parameters.
    pub fn expected(table: &TrsTable, n: f64, alpha: &DependenceAlpha, p: &CaptureProbs) -> Self {
        let w = latent_weights(alpha, p);
        let x = table.counts_f64();
        let unseen = (n - table.x0() as f64).max(0.0);
        let mut first = [0.0; 6];
        for (i, c) in SPLIT_CELLS.iter().enumerate() {
            first[i] = x[*c] * w.q_first[i];
        }
        Self { y111: w.q111.map(|q| q * x[cell::X111]), y000: w.q000.map(|q| q * unseen), first }
    }

    /// Same regime proportions for the unseen cell, resized to `N − x0`.
    pub fn rescale_unseen(&self, x0: u64, n: f64, fallback: &[f64; 5]) -> Self {
        let unseen = (n - x0 as f64).max(0.0);
        let total: f64 = self.y000.iter().sum();
        let y000 = if total > 0.0 {
            self.y000.map(|v| v / total * unseen)
        } else {
            fallback.map(|q| q * unseen)
        };
        Self { y000, ..*self }
    }
}

/// Draws the latent partition given `(N, α, P)`.
pub fn sample_latent<R: Rng + ?Sized>(
    table: &TrsTable,
    n: u64,
    alpha: &DependenceAlpha,
    p: &CaptureProbs,
    rng: &mut R,
) -> Result<LatentCounts> {
    let x0 = table.x0();
    if n < x0 {
        return Err(MseError::Domain(format!("N = {n} below x0 = {x0}")));
    }
    let w = latent_weights(alpha, p);
    sample_latent_with(table, n, &w, rng)
}

pub(crate) fn sample_latent_with<R: Rng + ?Sized>(
    table: &TrsTable,
    n: u64,
    w: &LatentWeights,
    rng: &mut R,
) -> Result<LatentCounts> {
    let y111 = sample_multinomial(table.x111(), &w.q111, rng)?;
    let y000 = sample_multinomial(n - table.x0(), &w.q000, rng)?;
    let c = table.counts();
    let mut first = [0u64; 6];
    for (i, cell) in SPLIT_CELLS.iter().enumerate() {
        first[i] = sample_binomial(c[*cell], w.q_first[i], rng)?;
    }
    Ok(LatentCounts {
        y111: [y111[0], y111[1], y111[2], y111[3], y111[4]],
        y000: [y000[0], y000[1], y000[2], y000[3], y000[4]],
        y110_1: first[0],
        y011_1: first[1],
        y100_1: first[2],
        y101_1: first[3],
        y010_1: first[4],
        y001_1: first[5],
    })
}

/// How the capture-probability conditional is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PCond {
    /// Moment-matched beta used as is.
    #[default]
    Plugin,
    /// Beta prior multiplied by the complete-data exponents (shapes doubled).
    Posterior,
}

impl std::str::FromStr for PCond {
    type Err = MseError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(PCond::Plugin),
            "posterior" => Ok(PCond::Posterior),
            o => Err(MseError::Parse(format!("unknown pcond '{o}' (plugin|posterior)"))),
        }
    }
}

/// Minimum value of any beta shape.
pub const SHAPE_FLOOR: f64 = 0.5;

/// Moment-matched beta shapes `(m̂_l, n̂_l)` for the three lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaShapes {
    pub m: [f64; 3],
    pub n: [f64; 3],
    /// Whether any shape hit [`SHAPE_FLOOR`].
    pub floored: bool,
}

impl BetaShapes {
    pub fn compute(table: &TrsTable, latent: &LatentState, n_pop: f64) -> Self {
        let (m, n) = raw_shapes(table, latent, n_pop);
        let floored = m.iter().chain(&n).any(|&v| v < SHAPE_FLOOR);
        Self { m: m.map(|v| v.max(SHAPE_FLOOR)), n: n.map(|v| v.max(SHAPE_FLOOR)), floored }
    }

    pub fn means(&self) -> [f64; 3] {
        [0, 1, 2].map(|l| self.m[l] / (self.m[l] + self.n[l]))
    }
}

/// Unfloored shapes.
pub(crate) fn raw_shapes(table: &TrsTable, y: &LatentState, n_pop: f64) -> ([f64; 3], [f64; 3]) {
    let x = table.counts_f64();
    let [f110, f011, f100, f101, f010, f001] = y.first;
    let m1 = table.n1() as f64;
    let n1 = n_pop - m1;
    let m2 = y.y111[0] + y.y111[2] + y.y111[3] + f110 + x[cell::X011] + x[cell::X010];
    let n2 = x[cell::X100] + x[cell::X101] + f001 + y.y000[0] + y.y000[2] + y.y000[3];
    let m3 = y.y111[0] + y.y111[1] + f011 + f101 + x[cell::X001];
    let n3 = x[cell::X110] + f100 + f010 + y.y000[0] + y.y000[1];
    ([m1, m2, m3], [n1, n2, n3])
}

/// Draws `P_l ~ Beta(m̂_l, n̂_l)` independently (shapes doubled in posterior
/// mode).
pub fn sample_capture_probs<R: Rng + ?Sized>(shapes: &BetaShapes, pcond: PCond, rng: &mut R) -> Result<CaptureProbs> {
    let k = match pcond {
        PCond::Plugin => 1.0,
        PCond::Posterior => 2.0,
    };
    let mut p = [0.0; 3];
    for l in 0..3 {
        p[l] = sample_beta(k * shapes.m[l], k * shapes.n[l], rng)?;
    }
    Ok(CaptureProbs::clamped(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastics::RngStream;
    use crate::table::builtin_dataset;

    #[test]
    fn zero_alpha_puts_everything_in_regime_zero() {
        let t = builtin_dataset("als_deployed").unwrap();
        let mut r = RngStream::new(5, 0);
        let y = sample_latent(&t, 60, &DependenceAlpha::zero(), &CaptureProbs::new([0.4, 0.5, 0.6]).unwrap(), &mut r)
            .unwrap();
        assert_eq!(y.y111, [10, 0, 0, 0, 0]);
        assert_eq!(y.y000, [20, 0, 0, 0, 0]);
        assert_eq!(y.first(), [2, 4, 5, 12, 2, 5]);
        y.check(&t, 60).unwrap();
    }

    #[test]
    fn deployed_shapes_at_53() {
        let t = builtin_dataset("als_deployed").unwrap();
        let y = LatentState::expected(&t, 53.0, &DependenceAlpha::zero(), &CaptureProbs::new([0.5; 3]).unwrap());
        let s = BetaShapes::compute(&t, &y, 53.0);
        assert_eq!((s.m[0], s.n[0]), (29.0, 24.0));
        assert!((s.means()[0] - 0.547).abs() < 1e-3);
    }

    #[test]
    fn everyone_in_list_one() {
        let t = TrsTable::from_counts([3, 2, 2, 0, 4, 0, 0]).unwrap();
        let y = LatentState::expected(&t, 11.0, &DependenceAlpha::zero(), &CaptureProbs::new([0.5; 3]).unwrap());
        let s = BetaShapes::compute(&t, &y, 11.0);
        assert_eq!(s.n[0], SHAPE_FLOOR);
        assert!(s.floored);
        let mut r = RngStream::new(1, 1);
        let mean: f64 = (0..2000).map(|_| sample_capture_probs(&s, PCond::Plugin, &mut r).unwrap().p[0]).sum::<f64>() / 2000.0;
        assert!(mean > 0.9);
    }

    #[test]
    fn rescale_keeps_proportions() {
        let s = LatentState { y111: [0.0; 5], y000: [2.0, 1.0, 1.0, 0.0, 0.0], first: [0.0; 6] };
        let r = s.rescale_unseen(10, 18.0, &[0.2; 5]);
        assert_eq!(r.y000, [4.0, 2.0, 2.0, 0.0, 0.0]);
        let z = LatentState { y000: [0.0; 5], ..s }.rescale_unseen(10, 15.0, &[0.2; 5]);
        assert_eq!(z.y000, [1.0; 5]);
    }
}
