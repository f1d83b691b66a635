//! The linear corruption path, target construction, and the affine readouts
//! that convert a prediction of one target into any other at a known time.
//!
//! With `z = t x + (1 - t) eps` the readouts are
//!
//! ```text
//! from clean:     eps_hat = (z - t x_hat) / (1 - t)     v_hat = (x_hat - z) / (1 - t)
//! from noise:     x_hat   = (z - (1 - t) e_hat) / t     v_hat = (z - e_hat) / t
//! from velocity:  x_hat   = z + (1 - t) v_hat           e_hat = z - t v_hat
//! ```
//!
//! Conversion reweights the direct prediction error by a signed scalar
//! (see [`induced_error_scale`]), which is why targets that are affinely
//! equivalent after prediction still pose different regression problems.
//!
//! Time guards are exact comparisons against 0 and 1. Callers that need
//! near-endpoint behavior clamp explicitly (the flow sampler does); silently
//! clamping here would hide the singularities this analysis is about.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{CorruptionTime, LatentVector, TargetKind};

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// The linear corruption path `z = t x + (1 - t) eps`, elementwise.
pub fn corrupt(x: &[f64], eps: &[f64], t: CorruptionTime) -> Result<LatentVector> {
    check_dims(x, eps)?;
    let tv = t.value();
    Ok(x.iter()
        .zip(eps)
        .map(|(&xi, &ei)| tv * xi + (1.0 - tv) * ei)
        .collect())
}

/// The three direct targets built from one (x, eps) pair.
pub fn make_targets(x: &[f64], eps: &[f64]) -> Result<BTreeMap<TargetKind, LatentVector>> {
    check_dims(x, eps)?;
    let mut map = BTreeMap::new();
    map.insert(TargetKind::Clean, x.to_vec());
    map.insert(TargetKind::Noise, eps.to_vec());
    map.insert(
        TargetKind::Velocity,
        x.iter().zip(eps).map(|(&xi, &ei)| xi - ei).collect(),
    );
    Ok(map)
}

/// Checks the time guard for one ordered conversion. Conversions out of a
/// clean prediction divide by 1 - t; conversions out of a noise prediction
/// divide by t; velocity readouts are defined everywhere.
fn guard_time(from: TargetKind, to: TargetKind, t: CorruptionTime) -> Result<f64> {
    let tv = t.value();
    if from != to {
        match from {
            TargetKind::Clean if tv == 1.0 => {
                return Err(Error::ForbiddenTime { from, to, t: tv });
            }
            TargetKind::Noise if tv == 0.0 => {
                return Err(Error::ForbiddenTime { from, to, t: tv });
            }
            _ => {}
        }
    }
    Ok(tv)
}

/// Affine readout of target `to` from a prediction of target `from`,
/// given the corrupted latent z at time t. `from == to` is the identity.
pub fn readout(
    prediction: &[f64],
    from: TargetKind,
    to: TargetKind,
    z: &[f64],
    t: CorruptionTime,
) -> Result<LatentVector> {
    check_dims(prediction, z)?;
    let tv = guard_time(from, to, t)?;
    use TargetKind::*;
    let out = prediction
        .iter()
        .zip(z)
        .map(|(&p, &zi)| match (from, to) {
            (a, b) if a == b => p,
            (Clean, Noise) => (zi - tv * p) / (1.0 - tv),
            (Clean, Velocity) => (p - zi) / (1.0 - tv),
            (Noise, Clean) => (zi - (1.0 - tv) * p) / tv,
            (Noise, Velocity) => (zi - p) / tv,
            (Velocity, Clean) => zi + (1.0 - tv) * p,
            (Velocity, Noise) => zi - tv * p,
            _ => unreachable!(),
        })
        .collect();
    Ok(out)
}

/// The signed scalar s with `converted error = s * direct error` for one
/// ordered conversion at time t.
pub fn induced_error_scale(from: TargetKind, to: TargetKind, t: CorruptionTime) -> Result<f64> {
    let tv = guard_time(from, to, t)?;
    use TargetKind::*;
    let s = match (from, to) {
        (a, b) if a == b => 1.0,
        (Clean, Noise) => -tv / (1.0 - tv),
        (Clean, Velocity) => 1.0 / (1.0 - tv),
        (Noise, Clean) => -(1.0 - tv) / tv,
        (Noise, Velocity) => -1.0 / tv,
        (Velocity, Clean) => 1.0 - tv,
        (Velocity, Noise) => -tv,
        _ => unreachable!(),
    };
    Ok(s)
}

/// Squared clean-prediction error weighted by (1 - t)^-2. Equals the squared
/// error of the clean-to-velocity readout against the true velocity, so
/// training a clean predictor under this weight reproduces the
/// velocity-space loss convention.
pub fn weighted_clean_loss(x_hat: &[f64], x: &[f64], t: CorruptionTime) -> Result<f64> {
    check_dims(x_hat, x)?;
    let tv = t.value();
    if tv == 1.0 {
        return Err(Error::ForbiddenTime {
            from: TargetKind::Clean,
            to: TargetKind::Velocity,
            t: tv,
        });
    }
    let sq: f64 = x_hat
        .iter()
        .zip(x)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    Ok(sq / ((1.0 - tv) * (1.0 - tv)))
}

/// All three parameterizations of one prediction, tied together by the
/// readouts at the time it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTriple {
    pub x_hat: LatentVector,
    pub eps_hat: LatentVector,
    pub v_hat: LatentVector,
}

impl PredictionTriple {
    /// Expands a single direct prediction into all three parameterizations.
    /// The result satisfies `x_hat = z + (1 - t) v_hat` and
    /// `eps_hat = z - t v_hat`.
    pub fn from_prediction(
        prediction: &[f64],
        kind: TargetKind,
        z: &[f64],
        t: CorruptionTime,
    ) -> Result<Self> {
        Ok(Self {
            x_hat: readout(prediction, kind, TargetKind::Clean, z, t)?,
            eps_hat: readout(prediction, kind, TargetKind::Noise, z, t)?,
            v_hat: readout(prediction, kind, TargetKind::Velocity, z, t)?,
        })
    }
}
