//! Closed-form target geometry under the local linear-Gaussian model.
//!
//! With `x ~ N(0, diag(spectrum))`, `eps ~ N(0, I)` and the linear path
//! `z = t x + (1 - t) eps`, every quantity here is an exact per-coordinate
//! formula from joint Gaussian conditioning:
//!
//! * mixture variance      `D = t^2 lambda + (1 - t)^2`
//! * conditional variances `Var(x|z) = lambda (1-t)^2 / D`,
//!   `Var(eps|z) = t^2 lambda / D`, `Var(v|z) = lambda / D`
//! * Bayes coefficients    `E[y|z] = c z` with
//!   `c_x = t lambda / D`, `c_eps = (1-t) / D`, `c_v = (t lambda - (1-t)) / D`
//!
//! All analysis is done in the eigenbasis; callers with a dense covariance
//! eigendecompose first.

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::types::{CorruptionTime, EffectiveRankKind, RiskCurve, Spectrum, TargetKind};

fn check_eigenvalue(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidEigenvalue(lambda));
    }
    Ok(())
}

/// Per-coordinate variance of the corrupted latent:
/// `D = t^2 lambda + (1 - t)^2`. Zero only at lambda = 0, t = 1.
pub fn mixture_variance(lambda: f64, t: CorruptionTime) -> Result<f64> {
    check_eigenvalue(lambda)?;
    let t = t.value();
    Ok(t * t * lambda + (1.0 - t) * (1.0 - t))
}

/// Returns D, rejecting the degenerate point where it vanishes.
fn positive_mixture_variance(lambda: f64, t: CorruptionTime) -> Result<f64> {
    let d = mixture_variance(lambda, t)?;
    if d <= 0.0 {
        return Err(Error::DegenerateMixture {
            lambda,
            t: t.value(),
        });
    }
    Ok(d)
}

/// Marginal covariance spectrum of a target: clean keeps the data spectrum,
/// noise is isotropic unit, velocity adds the unit floor to every direction.
pub fn target_covariance(spectrum: &Spectrum, target: TargetKind) -> Spectrum {
    let values = match target {
        TargetKind::Clean => spectrum.eigenvalues().to_vec(),
        TargetKind::Noise => vec![1.0; spectrum.dim()],
        TargetKind::Velocity => spectrum.eigenvalues().iter().map(|&l| l + 1.0).collect(),
    };
    // Adding a constant preserves descending order, so no re-sort is needed.
    Spectrum::from_sorted(values)
}

/// Bayes residual variance Var(y | z) for one coordinate.
pub fn conditional_variance(lambda: f64, t: CorruptionTime, target: TargetKind) -> Result<f64> {
    let d = positive_mixture_variance(lambda, t)?;
    let tv = t.value();
    let value = match target {
        TargetKind::Clean => lambda * (1.0 - tv) * (1.0 - tv) / d,
        TargetKind::Noise => tv * tv * lambda / d,
        TargetKind::Velocity => lambda / d,
    };
    Ok(value)
}

/// The scalar c with E[y | z] = c z for one coordinate.
pub fn bayes_coefficient(lambda: f64, t: CorruptionTime, target: TargetKind) -> Result<f64> {
    let d = positive_mixture_variance(lambda, t)?;
    let tv = t.value();
    let value = match target {
        TargetKind::Clean => tv * lambda / d,
        TargetKind::Noise => (1.0 - tv) / d,
        TargetKind::Velocity => (tv * lambda - (1.0 - tv)) / d,
    };
    Ok(value)
}

/// Sum of conditional variances over the eigenbasis: the aggregate residual
/// risk of the Bayes estimator at time t. The spectrum's canonical descending
/// order plus compensated summation makes the result independent of the
/// order eigenvalues were supplied in.
pub fn aggregate_risk(spectrum: &Spectrum, t: CorruptionTime, target: TargetKind) -> Result<f64> {
    let mut terms = Vec::with_capacity(spectrum.dim());
    for &lambda in spectrum.eigenvalues() {
        terms.push(conditional_variance(lambda, t, target)?);
    }
    Ok(compensated_sum(terms))
}

/// Pointwise aggregate risk over a strictly increasing time grid.
pub fn risk_curve(
    spectrum: &Spectrum,
    times: &[CorruptionTime],
    target: TargetKind,
) -> Result<RiskCurve> {
    if times.is_empty() {
        return Err(Error::invalid_argument("risk curve needs at least one time"));
    }
    if times.windows(2).any(|w| w[1].value() <= w[0].value()) {
        return Err(Error::invalid_argument(
            "risk curve times must be strictly increasing",
        ));
    }
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        values.push(aggregate_risk(spectrum, t, target)?);
    }
    Ok(RiskCurve {
        times: times.to_vec(),
        values,
        target,
        spectrum: spectrum.clone(),
    })
}

/// Effective rank with the default participation-ratio definition.
pub fn effective_rank(spectrum: &Spectrum) -> Result<f64> {
    effective_rank_with(spectrum, EffectiveRankKind::ParticipationRatio)
}

/// Scalar spread of a spectrum, in [1, dim]. The participation ratio is
/// `(sum lambda)^2 / sum lambda^2`; the spectral-entropy alternative is
/// `exp(-sum p ln p)` with `p = lambda / sum lambda`.
pub fn effective_rank_with(spectrum: &Spectrum, kind: EffectiveRankKind) -> Result<f64> {
    let trace = spectrum.trace();
    if trace <= 0.0 {
        return Err(Error::invalid_argument(
            "effective rank is undefined for the all-zero spectrum",
        ));
    }
    let value = match kind {
        EffectiveRankKind::ParticipationRatio => {
            let sq = compensated_sum(spectrum.eigenvalues().iter().map(|&l| l * l));
            trace * trace / sq
        }
        EffectiveRankKind::SpectralEntropy => {
            let entropy = compensated_sum(spectrum.eigenvalues().iter().filter_map(|&l| {
                if l > 0.0 {
                    let p = l / trace;
                    Some(-p * p.ln())
                } else {
                    None
                }
            }));
            entropy.exp()
        }
    };
    Ok(value)
}
