//! Shared domain types: spectra, corruption times, and prediction targets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense latent vector. Dimension is contextual and checked by the
/// operations that combine vectors.
pub type LatentVector = Vec<f64>;

/// Ordered non-negative eigenvalues of the local clean-data covariance,
/// stored sorted descending. All coordinate-wise analysis happens in this
/// eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Builds a spectrum from raw eigenvalues, sorting them descending.
    /// Rejects empty input and any negative or non-finite value.
    pub fn new(mut eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        for &lambda in &eigenvalues {
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(Error::InvalidEigenvalue(lambda));
            }
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { eigenvalues })
    }

    /// Geometric family: `dim` eigenvalues `top * ratio^i`. A compact way to
    /// express anisotropic spectra with many small directions.
    pub fn geometric(dim: usize, top: f64, ratio: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptySpectrum);
        }
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::invalid_argument(format!(
                "geometric decay ratio must be positive, got {ratio}"
            )));
        }
        let values = (0..dim).map(|i| top * ratio.powi(i as i32)).collect();
        Self::new(values)
    }

    /// Eigendecomposes a dense symmetric covariance matrix (cyclic Jacobi
    /// rotations) and keeps its spectrum. All analysis in this crate happens
    /// in the eigenbasis; this is the entry point for callers holding a
    /// full covariance.
    pub fn from_covariance(matrix: &ndarray::Array2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 {
            return Err(Error::EmptySpectrum);
        }
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.ncols(),
            });
        }
        let sym_tol = 1e-9
            * matrix
                .iter()
                .fold(0.0f64, |acc, &v| acc.max(v.abs()))
                .max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > sym_tol {
                    return Err(Error::invalid_argument(format!(
                        "covariance must be symmetric: [{i},{j}] = {} vs [{j},{i}] = {}",
                        matrix[(i, j)],
                        matrix[(j, i)]
                    )));
                }
            }
        }
        let mut a = matrix.clone();
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(a[(i, j)].abs());
                }
            }
            if off < 1e-14 * sym_tol.max(1.0) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        // Rounding can leave tiny negative diagonals on singular inputs.
        let eigenvalues: Vec<f64> = (0..n)
            .map(|i| {
                let v = a[(i, i)];
                if v < 0.0 && v > -1e-10 * sym_tol.max(1.0) {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        Self::new(eigenvalues)
    }

    /// Internal constructor for values already validated and sorted descending.
    pub(crate) fn from_sorted(eigenvalues: Vec<f64>) -> Self {
        debug_assert!(eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        Self { eigenvalues }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Sum of eigenvalues (trace of the covariance).
    pub fn trace(&self) -> f64 {
        crate::numeric::compensated_sum(self.eigenvalues.iter().copied())
    }

    /// True when every eigenvalue equals the first one.
    pub fn is_isotropic(&self) -> bool {
        self.eigenvalues.iter().all(|&l| l == self.eigenvalues[0])
    }
}

impl TryFrom<Vec<f64>> for Spectrum {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Spectrum::new(values)
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(s: Spectrum) -> Vec<f64> {
        s.eigenvalues
    }
}

/// A point on the linear corruption path, constrained to [0, 1].
/// Operations that divide by t or 1-t enforce their stricter bounds
/// themselves and report a dedicated error.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CorruptionTime(f64);

impl CorruptionTime {
    pub fn new(t: f64) -> Result<Self> {
        if !(t.is_finite() && (0.0..=1.0).contains(&t)) {
            return Err(Error::InvalidTime(t));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CorruptionTime {
    type Error = Error;

    fn try_from(t: f64) -> Result<Self> {
        CorruptionTime::new(t)
    }
}

impl From<CorruptionTime> for f64 {
    fn from(t: CorruptionTime) -> f64 {
        t.0
    }
}

impl fmt::Display for CorruptionTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The three direct regression targets on the linear path:
/// clean data `x`, noise `eps`, and velocity `x - eps`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Clean,
    Noise,
    Velocity,
}

impl TargetKind {
    pub const ALL: [TargetKind; 3] = [TargetKind::Clean, TargetKind::Noise, TargetKind::Velocity];
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TargetKind::Clean => "clean",
            TargetKind::Noise => "noise",
            TargetKind::Velocity => "velocity",
        };
        f.write_str(name)
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clean" | "x" => Ok(TargetKind::Clean),
            "noise" | "eps" | "epsilon" => Ok(TargetKind::Noise),
            "velocity" | "v" => Ok(TargetKind::Velocity),
            other => Err(Error::invalid_argument(format!(
                "unknown target kind '{other}' (expected clean, noise, or velocity)"
            ))),
        }
    }
}

/// Pointwise residual risk of the Bayes estimator across a grid of times.
#[derive(Debug, Clone, Serialize)]
pub struct RiskCurve {
    pub times: Vec<CorruptionTime>,
    pub values: Vec<f64>,
    pub target: TargetKind,
    pub spectrum: Spectrum,
}

/// How to summarize spectrum spread as a scalar rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectiveRankKind {
    /// (sum lambda)^2 / sum lambda^2; the default.
    ParticipationRatio,
    /// exp of the spectral entropy of lambda / sum lambda.
    SpectralEntropy,
}
