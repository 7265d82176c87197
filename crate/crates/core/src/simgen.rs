//! Population generators: copy-regime populations with logit-scale
//! heterogeneity, the misspecification scenarios, and seeded batches.

use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MseError, Result};
use crate::stochastics::{logistic, sample_gl1, sample_normal, RngStream};
use crate::table::TrsTable;
use crate::thbm::DependenceAlpha;

/// Distribution of the logit-scale capture effect `b_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum Heterogeneity {
    Normal { mu: f64, sd: f64 },
    Gl1 { eta: f64 },
    Fixed { value: f64 },
}

impl Heterogeneity {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Heterogeneity::Normal { mu, sd } => mu.is_finite() && sd.is_finite() && sd >= 0.0,
            Heterogeneity::Gl1 { eta } => eta.is_finite() && eta > 0.0,
            Heterogeneity::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(MseError::InvalidSpec(format!("bad heterogeneity parameters {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match *self {
            Heterogeneity::Normal { mu, sd: 0.0 } => Ok(mu),
            Heterogeneity::Normal { mu, sd } => sample_normal(mu, sd, rng),
            Heterogeneity::Gl1 { eta } => sample_gl1(eta, rng),
            Heterogeneity::Fixed { value } => Ok(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    S1,
    S2,
    S3,
    S4,
}

impl std::str::FromStr for Scenario {
    type Err = MseError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Scenario::S1),
            "S2" => Ok(Scenario::S2),
            "S3" => Ok(Scenario::S3),
            "S4" => Ok(Scenario::S4),
            _ => Err(MseError::InvalidSpec(format!("unknown scenario '{s}'"))),
        }
    }
}

/// Knobs of the behavioural-response scenarios S1/S2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    /// `P^(j) = min(multiplier · P^(j−1), 0.99)` after a capture.
    pub multiplier: f64,
    /// Additive reading: `P^(j) = min(P^(j−1)·[Z=0] + multiplier·[Z=1], 0.99)`.
    pub literal: bool,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self { multiplier: 1.2, literal: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum PopulationModel {
    Thbm { alpha: DependenceAlpha, b: [Heterogeneity; 3] },
    Scenario { scenario: Scenario, options: ScenarioOptions },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSpec {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(flatten)]
    pub model: PopulationModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "N")]
    n: u64,
    alpha: Option<[f64; 4]>,
    b: Option<[Heterogeneity; 3]>,
    scenario: Option<Scenario>,
    multiplier: Option<f64>,
    s_literal: Option<bool>,
}

const ALPHA_A: [f64; 4] = [0.30, 0.30, 0.15, 0.10];
const ALPHA_B: [f64; 4] = [0.25, 0.15, 0.35, 0.10];

fn normal(mu: f64, sd: f64) -> Heterogeneity {
    Heterogeneity::Normal { mu, sd }
}

fn gl1(eta: f64) -> Heterogeneity {
    Heterogeneity::Gl1 { eta }
}

impl PopulationSpec {
    pub fn thbm(n: u64, alpha: [f64; 4], b: [Heterogeneity; 3]) -> Result<Self> {
        let alpha = DependenceAlpha::new(alpha).map_err(|e| MseError::InvalidSpec(e.to_string()))?;
        for h in &b {
            h.validate()?;
        }
        if n == 0 {
            return Err(MseError::InvalidSpec("N must be at least 1".into()));
        }
        Ok(Self { n, model: PopulationModel::Thbm { alpha, b } })
    }

    pub fn scenario(n: u64, scenario: Scenario, options: ScenarioOptions) -> Result<Self> {
        if n == 0 {
            return Err(MseError::InvalidSpec("N must be at least 1".into()));
        }
        if !(options.multiplier.is_finite() && options.multiplier >= 0.0) {
            return Err(MseError::InvalidSpec(format!("bad multiplier {}", options.multiplier)));
        }
        Ok(Self { n, model: PopulationModel::Scenario { scenario, options } })
    }

    /// Named populations `p1`–`p8` and scenarios `s1`–`s4`.
    pub fn preset(name: &str, n: u64) -> Result<Self> {
        let normal_wide = [normal(1.0, 5.0), normal(0.5, 5.0), normal(0.0, 5.0)];
        let normal_narrow = [normal(0.5, 1.0), normal(0.4, 1.0), normal(0.3, 1.0)];
        let gl_up = [gl1(1.0), gl1(1.4), gl1(1.8)];
        let gl_down = [gl1(1.6), gl1(1.2), gl1(0.8)];
        match name.to_ascii_lowercase().as_str() {
            "p1" => Self::thbm(n, ALPHA_A, normal_wide),
            "p2" => Self::thbm(n, ALPHA_A, normal_narrow),
            "p3" => Self::thbm(n, ALPHA_B, normal_wide),
            "p4" => Self::thbm(n, ALPHA_B, normal_narrow),
            "p5" => Self::thbm(n, ALPHA_A, gl_up),
            "p6" => Self::thbm(n, ALPHA_A, gl_down),
            "p7" => Self::thbm(n, ALPHA_B, gl_up),
            "p8" => Self::thbm(n, ALPHA_B, gl_down),
            s @ ("s1" | "s2" | "s3" | "s4") => Self::scenario(n, s.parse()?, ScenarioOptions::default()),
            _ => Err(MseError::InvalidSpec(format!("unknown population preset '{name}'"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(s).map_err(|e| MseError::InvalidSpec(e.to_string()))?;
        match (raw.scenario, raw.alpha, raw.b) {
            (Some(sc), None, None) => {
                let mut opts = ScenarioOptions::default();
                if let Some(m) = raw.multiplier {
                    opts.multiplier = m;
                }
                opts.literal = raw.s_literal.unwrap_or(false);
                Self::scenario(raw.n, sc, opts)
            }
            (None, Some(alpha), Some(b)) if raw.multiplier.is_none() && raw.s_literal.is_none() => Self::thbm(raw.n, alpha, b),
            _ => Err(MseError::InvalidSpec(
                "expected either {N, alpha, b} or {N, scenario[, multiplier, s_literal]}".into(),
            )),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Preset name or path to a JSON spec. `n` overrides the spec's size.
    pub fn resolve(name_or_path: &str, n: Option<u64>) -> Result<Self> {
        let path = Path::new(name_or_path);
        let mut spec = if path.extension().is_some_and(|e| e == "json") || path.exists() {
            Self::from_path(path)?
        } else {
            Self::preset(name_or_path, n.unwrap_or(1000))?
        };
        if let Some(n) = n {
            if n == 0 {
                return Err(MseError::InvalidSpec("N must be at least 1".into()));
            }
            spec.n = n;
        }
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        let mut v = serde_json::to_value(self).expect("spec serializes");
        if let PopulationModel::Thbm { alpha, .. } = &self.model {
            v["alpha"] = serde_json::json!(alpha.a);
        }
        if let PopulationModel::Scenario { options, .. } = &self.model {
            let obj = v.as_object_mut().expect("object");
            obj.remove("options");
            obj.insert("multiplier".into(), options.multiplier.into());
            obj.insert("s_literal".into(), options.literal.into());
        }
        v.to_string()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimResult {
    pub table: TrsTable,
    #[serde(skip)]
    pub truth: PopulationSpec,
    pub x000: u64,
    /// Per-regime eight-cell tables (canonical order, 000 last), regimes in
    /// the order independent, 1, 2, 3, 4. Only filled by instrumented runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime_tables: Option<[[u64; 8]; 5]>,
}

impl SimResult {
    pub fn n(&self) -> u64 {
        self.truth.n
    }
}

/// Canonical cell index of pattern `(z1, z2, z3)`; 7 is the unseen cell.
#[inline]
fn cell_index(z1: bool, z2: bool, z3: bool) -> usize {
    const LUT: [usize; 8] = [7, 6, 5, 3, 4, 2, 1, 0];
    LUT[(z1 as usize) << 2 | (z2 as usize) << 1 | z3 as usize]
}

/// Regime draw: 0 is independent behaviour, 1..4 the copy regimes.
fn draw_regime<R: Rng + ?Sized>(w: &[f64; 5], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (r, p) in w.iter().enumerate().skip(1) {
        acc += p;
        if u < acc {
            return r;
        }
    }
    0
}

/// Observed pattern for regime `r` given the three latent Bernoulli draws.
#[inline]
fn regime_pattern(r: usize, x: [bool; 3]) -> [bool; 3] {
    match r {
        1 => [x[0], x[0], x[2]],
        2 => [x[0], x[1], x[1]],
        3 => [x[0], x[1], x[0]],
        4 => [x[0], x[0], x[0]],
        _ => x,
    }
}

fn finish(spec: &PopulationSpec, cells: [u64; 8], regimes: Option<[[u64; 8]; 5]>) -> Result<SimResult> {
    let mut obs = [0u64; 7];
    obs.copy_from_slice(&cells[..7]);
    Ok(SimResult { table: TrsTable::from_counts(obs)?, truth: spec.clone(), x000: cells[7], regime_tables: regimes })
}

fn generate_thbm_inner<R: Rng + ?Sized>(spec: &PopulationSpec, instrument: bool, rng: &mut R) -> Result<SimResult> {
    let PopulationModel::Thbm { alpha, b } = &spec.model else {
        return Err(MseError::InvalidSpec("scenario specs go through generate_scenario".into()));
    };
    let w = alpha.regime_weights();
    let mut cells = [0u64; 8];
    let mut regimes = [[0u64; 8]; 5];
    for _ in 0..spec.n {
        let mut x = [false; 3];
        for l in 0..3 {
            let p = logistic(b[l].sample(rng)?);
            x[l] = rng.random::<f64>() < p;
        }
        let r = draw_regime(&w, rng);
        let z = regime_pattern(r, x);
        let c = cell_index(z[0], z[1], z[2]);
        cells[c] += 1;
        if instrument {
            regimes[r][c] += 1;
        }
    }
    finish(spec, cells, instrument.then_some(regimes))
}

/// One dataset from a copy-regime population with per-individual
/// heterogeneity.
pub fn generate_thbm<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<SimResult> {
    generate_thbm_inner(spec, false, rng)
}

/// As [`generate_thbm`], also recording which regime produced each pattern.
pub fn generate_thbm_instrumented<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<SimResult> {
    generate_thbm_inner(spec, true, rng)
}

fn update_p(p: f64, captured: bool, opts: &ScenarioOptions) -> f64 {
    if !captured {
        return p;
    }
    let next = if opts.literal { opts.multiplier } else { opts.multiplier * p };
    next.min(0.99)
}

/// One dataset from a misspecification scenario.
pub fn generate_scenario<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<SimResult> {
    let PopulationModel::Scenario { scenario, options } = &spec.model else {
        return Err(MseError::InvalidSpec("not a scenario spec".into()));
    };
    let mut cells = [0u64; 8];
    match scenario {
        Scenario::S1 | Scenario::S2 => {
            let shape_b = if *scenario == Scenario::S1 { 2.0 } else { 4.0 };
            let beta = Beta::new(2.0, shape_b).expect("valid beta");
            let w = DependenceAlpha { a: [0.1; 4] }.regime_weights();
            for _ in 0..spec.n {
                let r = draw_regime(&w, rng);
                let mut p = beta.sample(rng);
                let x1 = rng.random::<f64>() < p;
                let z1 = x1;
                p = update_p(p, z1, options);
                let x2 = rng.random::<f64>() < p;
                let z2 = if matches!(r, 1 | 4) { x1 } else { x2 };
                p = update_p(p, z2, options);
                let x3 = rng.random::<f64>() < p;
                let z = regime_pattern(r, [x1, x2, x3]);
                debug_assert_eq!((z[0], z[1]), (z1, z2));
                cells[cell_index(z[0], z[1], z[2])] += 1;
            }
        }
        Scenario::S3 | Scenario::S4 => {
            let s = if *scenario == Scenario::S3 { [-1.0, 0.0, 1.0] } else { [1.0, 0.5, 0.1] };
            for _ in 0..spec.n {
                let v: f64 = StandardNormal.sample(rng);
                let z = s.map(|sl| rng.random::<f64>() < logistic(v + sl));
                cells[cell_index(z[0], z[1], z[2])] += 1;
            }
        }
    }
    finish(spec, cells, None)
}

/// Dispatches on the spec kind.
pub fn generate<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<SimResult> {
    match spec.model {
        PopulationModel::Thbm { .. } => generate_thbm(spec, rng),
        PopulationModel::Scenario { .. } => generate_scenario(spec, rng),
    }
}

/// `reps` independent datasets; replicate `r` uses stream `r` of `seed`.
pub fn generate_batch(spec: &PopulationSpec, reps: usize, seed: u64) -> Vec<Result<SimResult>> {
    (0..reps)
        .into_par_iter()
        .map(|r| generate(spec, &mut RngStream::new(seed, r as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_lookup() {
        assert_eq!(cell_index(true, true, true), 0);
        assert_eq!(cell_index(true, true, false), 1);
        assert_eq!(cell_index(true, false, true), 2);
        assert_eq!(cell_index(false, true, true), 3);
        assert_eq!(cell_index(true, false, false), 4);
        assert_eq!(cell_index(false, true, false), 5);
        assert_eq!(cell_index(false, false, true), 6);
        assert_eq!(cell_index(false, false, false), 7);
    }

    #[test]
    fn full_dependence_only_diagonal() {
        let spec = PopulationSpec::thbm(500, [0.0, 0.0, 0.0, 1.0], [normal(0.0, 1.0); 3]).unwrap();
        let r = generate_thbm(&spec, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(&r.table.counts()[1..], &[0; 6]);
        assert_eq!(r.table.x0() + r.x000, 500);
    }

    #[test]
    fn presets_and_json() {
        for p in ["p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "s1", "s2", "s3", "s4"] {
            let spec = PopulationSpec::preset(p, 100).unwrap();
            let back = PopulationSpec::from_json_str(&spec.to_json_string()).unwrap();
            assert_eq!(back, spec, "{p}");
        }
        assert!(PopulationSpec::preset("p9", 10).is_err());
        let s = PopulationSpec::from_json_str(
            r#"{"N":1000,"alpha":[0.3,0.3,0.15,0.1],"b":[{"dist":"normal","mu":1,"sd":5},{"dist":"gl1","eta":1.4},{"dist":"fixed","value":0}]}"#,
        )
        .unwrap();
        assert_eq!(s.n, 1000);
        assert!(PopulationSpec::from_json_str(r#"{"N":10,"scenario":"S1","alpha":[0,0,0,0]}"#).is_err());
        assert!(PopulationSpec::from_json_str(r#"{"N":10,"alpha":[0.6,0.6,0,0],"b":[{"dist":"fixed","value":0},{"dist":"fixed","value":0},{"dist":"fixed","value":0}]}"#).is_err());
    }

    #[test]
    fn literal_reading_jumps() {
        let o = ScenarioOptions { literal: true, ..Default::default() };
        assert_eq!(update_p(0.1, true, &o), 0.99);
        assert!((update_p(0.1, true, &ScenarioOptions::default()) - 0.12).abs() < 1e-15);
        assert_eq!(update_p(0.9, true, &ScenarioOptions::default()), 0.99);
        assert_eq!(update_p(0.3, false, &o), 0.3);
    }

    #[test]
    fn batch_is_deterministic() {
        let spec = PopulationSpec::preset("p2", 200).unwrap();
        let a: Vec<_> = generate_batch(&spec, 4, 11).into_iter().map(|r| r.unwrap().table).collect();
        let b: Vec<_> = generate_batch(&spec, 4, 11).into_iter().map(|r| r.unwrap().table).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        let single = generate(&spec, &mut RngStream::new(11, 0)).unwrap();
        assert_eq!(single.table, a[0]);
    }
}
