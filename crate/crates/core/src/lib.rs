//! Numerical laboratory for prediction-target geometry on the linear
//! corruption path.
//!
//! Under a local linear-Gaussian model of the data, the crate provides:
//!
//! * [`geometry`] — closed-form marginal and conditional target statistics,
//!   Bayes coefficients, aggregate risks, and effective-rank summaries;
//! * [`path`] — the corruption path, target construction, affine readouts
//!   between parameterizations, and induced error scalings;
//! * [`montecarlo`] — seeded (x, eps, z) sampling with empirical estimators
//!   that independently validate every closed form, including a brute-force
//!   kNN conditional-variance diagnostic;
//! * [`probe`] — finite-capacity linear and MLP regression probes trained
//!   on corrupted latents to measure per-target fitting difficulty;
//! * [`sampler`] — probability-flow ODE generation with Heun integration,
//!   driven by the exact Bayes velocity field or by a trained probe.

pub mod error;
pub mod geometry;
mod mlp;
pub mod montecarlo;
mod numeric;
pub mod path;
pub mod probe;
pub mod sampler;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    CorruptionTime, EffectiveRankKind, LatentVector, RiskCurve, Spectrum, TargetKind,
};
