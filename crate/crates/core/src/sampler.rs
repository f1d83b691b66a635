//! Probability-flow ODE generation with Heun integration.
//!
//! The flow `dz/dt = v(z, t)` transports standard normal samples at t = 0
//! toward the data distribution at t = 1. Two field sources: the exact
//! Bayes posterior-mean velocity for a Gaussian ground truth, and a trained
//! probe converted to velocity through the affine readouts.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::bayes_coefficient;
use crate::numeric::derive_seed;
use crate::probe::Probe;
use crate::types::{CorruptionTime, LatentVector, Spectrum, TargetKind};

/// Distance kept from t = 1 when a spectrum has zero-variance directions,
/// where the analytic velocity coefficient diverges like 1/(1 - t).
pub const ENDPOINT_CLAMP: f64 = 1e-3;

/// Integrator configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SamplerConfig {
    /// Uniform Heun steps from t = 0 to t_max.
    pub steps: usize,
    pub t_max: f64,
    /// Number of integrated initial points for pushforward statistics.
    pub n: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 50,
            t_max: 1.0,
            n: 50_000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid_argument("integrator needs steps >= 1"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0 && self.t_max <= 1.0) {
            return Err(Error::invalid_argument(format!(
                "t_max must lie in (0, 1], got {}",
                self.t_max
            )));
        }
        Ok(())
    }

    /// 1.0 when every eigenvalue is positive, else clamped away from the
    /// endpoint singularity of the velocity field.
    pub fn default_t_max(spectrum: &Spectrum) -> f64 {
        if spectrum.eigenvalues().iter().all(|&l| l > 0.0) {
            1.0
        } else {
            1.0 - ENDPOINT_CLAMP
        }
    }
}

#[derive(Debug, Clone)]
enum FieldKind {
    AnalyticBayes(Spectrum),
    Probe(Box<Probe>),
}

/// A velocity field (z, t) -> dz/dt with recorded provenance.
#[derive(Debug, Clone)]
pub struct VelocityField {
    kind: FieldKind,
}

impl VelocityField {
    /// Evaluates the field. Analytic fields error at the (lambda = 0, t = 1)
    /// degeneracy; probe fields propagate their readout time guards.
    pub fn eval(&self, z: &[f64], t: CorruptionTime) -> Result<LatentVector> {
        match &self.kind {
            FieldKind::AnalyticBayes(spectrum) => {
                if z.len() != spectrum.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: spectrum.dim(),
                        got: z.len(),
                    });
                }
                spectrum
                    .eigenvalues()
                    .iter()
                    .zip(z)
                    .map(|(&lambda, &zi)| {
                        bayes_coefficient(lambda, t, TargetKind::Velocity).map(|c| c * zi)
                    })
                    .collect()
            }
            FieldKind::Probe(probe) => {
                let prediction = probe.predict(z, t)?;
                if probe.target() == TargetKind::Velocity {
                    Ok(prediction)
                } else {
                    crate::path::readout(&prediction, probe.target(), TargetKind::Velocity, z, t)
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            FieldKind::AnalyticBayes(spectrum) => spectrum.dim(),
            FieldKind::Probe(probe) => probe.input_dim(),
        }
    }

    /// Human-readable source of the field, recorded in reports.
    pub fn provenance(&self) -> String {
        match &self.kind {
            FieldKind::AnalyticBayes(spectrum) => {
                format!("analytic-bayes(dim={})", spectrum.dim())
            }
            FieldKind::Probe(probe) => {
                format!("probe({} target, {:?})", probe.target(), probe.config().kind)
            }
        }
    }
}

/// The exact posterior-mean velocity field of the Gaussian ground truth:
/// per coordinate, `E[v | z] = ((t lambda - (1 - t)) / D) z`.
pub fn analytic_velocity_field(spectrum: &Spectrum) -> VelocityField {
    VelocityField {
        kind: FieldKind::AnalyticBayes(spectrum.clone()),
    }
}

/// Wraps a probe as a velocity field. Non-velocity probes are converted
/// through the affine readout, so clean probes require t < 1.
pub fn probe_velocity_field(probe: Probe) -> VelocityField {
    VelocityField {
        kind: FieldKind::Probe(Box::new(probe)),
    }
}

/// Integrates dz/dt = field(z, t) from t = 0 to t_max on a uniform grid
/// with the explicit trapezoidal (Heun) predictor-corrector. Aborts with
/// the step index if the state stops being finite.
pub fn heun_integrate(
    field: &VelocityField,
    z0: &[f64],
    config: &SamplerConfig,
) -> Result<LatentVector> {
    config.validate()?;
    if z0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("initial state must be finite"));
    }
    let steps = config.steps;
    let mut z = z0.to_vec();
    let mut scratch = vec![0.0; z.len()];
    for step in 0..steps {
        let t0 = config.t_max * step as f64 / steps as f64;
        let t1 = config.t_max * (step + 1) as f64 / steps as f64;
        let h = t1 - t0;
        let k1 = field.eval(&z, CorruptionTime::new(t0)?)?;
        for (s, (zi, k)) in scratch.iter_mut().zip(z.iter().zip(&k1)) {
            *s = zi + h * k;
        }
        let k2 = field.eval(&scratch, CorruptionTime::new(t1)?)?;
        for ((zi, ka), kb) in z.iter_mut().zip(&k1).zip(&k2) {
            *zi += 0.5 * h * (ka + kb);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
    }
    Ok(z)
}

/// Integrates n seeded standard-normal initial points and returns the raw
/// endpoint matrix. Points are independent, each with its own derived
/// sub-seed, so integration parallelizes without affecting results.
pub fn pushforward_endpoints(
    field: &VelocityField,
    dim: usize,
    config: &SamplerConfig,
) -> Result<Array2<f64>> {
    config.validate()?;
    if config.n < 2 {
        return Err(Error::invalid_argument(
            "pushforward statistics need n >= 2",
        ));
    }
    if dim == 0 {
        return Err(Error::invalid_argument("dimension must be >= 1"));
    }
    let rows: Vec<Result<Vec<f64>>> = (0..config.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64));
            let z0: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            heun_integrate(field, &z0, config)
        })
        .collect();
    let mut values = Vec::with_capacity(config.n * dim);
    for row in rows {
        values.extend(row?);
    }
    Ok(Array2::from_shape_vec((config.n, dim), values).expect("shape matches construction"))
}

/// Per-coordinate sample variance of an endpoint matrix, as a spectrum.
pub fn endpoints_spectrum(endpoints: &Array2<f64>) -> Result<Spectrum> {
    if endpoints.nrows() < 2 {
        return Err(Error::invalid_argument(
            "pushforward statistics need n >= 2",
        ));
    }
    let variances: Vec<f64> = endpoints
        .axis_iter(ndarray::Axis(1))
        .map(|col| {
            let values: Vec<f64> = col.to_vec();
            crate::numeric::sample_variance(&values)
        })
        .collect();
    Spectrum::new(variances)
}

/// Per-coordinate sample variance of the ODE endpoints, as a spectrum.
pub fn pushforward_spectrum(
    field: &VelocityField,
    dim: usize,
    config: &SamplerConfig,
) -> Result<Spectrum> {
    let endpoints = pushforward_endpoints(field, dim, config)?;
    endpoints_spectrum(&endpoints)
}

/// 2-Wasserstein distance between centered Gaussians with diagonal
/// covariances: sqrt(sum_i (sqrt(a_i) - sqrt(b_i))^2), paired in the
/// spectra's canonical descending order.
pub fn gaussian_w2(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let sum = crate::numeric::compensated_sum(
        a.eigenvalues()
            .iter()
            .zip(b.eigenvalues())
            .map(|(&x, &y)| {
                let d = x.sqrt() - y.sqrt();
                d * d
            }),
    );
    Ok(sum.sqrt())
}
