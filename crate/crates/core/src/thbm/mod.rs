//! Trivariate heterogeneous Bernoulli model: copy-regime mixture over three
//! lists with beta-distributed capture probabilities, fitted by Monte-Carlo EM.

pub mod fit;
pub mod latent;
pub mod mstep;
pub mod oracle;
pub mod probs;

pub use fit::{estimate_thbm, fit_thbm, ThbmConfig, ThbmFit};
pub use latent::{sample_capture_probs, sample_latent, BetaShapes, LatentCounts, LatentState, PCond};
pub use mstep::{mstep, EStepSample, MStepResult};
pub use oracle::marginal_loglik_oracle;
pub use probs::{thbm_cell_probs, CaptureProbs, DependenceAlpha};
