//! Seeded sampling of (x, eps, z) triples and the empirical estimators that
//! validate the closed forms: marginal target covariance, Bayes residual
//! risk, and the kNN conditional-variance diagnostic.
//!
//! Reproducibility contract: every row of a batch is generated from its own
//! sub-seed derived from (base seed, row index), so regenerating with the
//! same (spectrum, t, n, seed) is bit-identical within a build, rows can be
//! produced in parallel, and a batch sampled as several row slices and
//! concatenated equals the batch sampled in one call.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::bayes_coefficient;
use crate::numeric::{compensated_sum, derive_seed, mean};
use crate::types::{CorruptionTime, LatentVector, Spectrum, TargetKind};

/// Name of the generator behind all sampling in this crate; recorded in
/// run reports so results are attributable to a concrete algorithm.
pub const GENERATOR_NAME: &str = "chacha8-per-row-splitmix-substream";

/// N aligned (x, eps, z) triples drawn at one fixed corruption time.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    t: CorruptionTime,
    xs: Array2<f64>,
    epss: Array2<f64>,
    zs: Array2<f64>,
    seed: u64,
    spectrum: Spectrum,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.xs.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xs.ncols()
    }

    pub fn t(&self) -> CorruptionTime {
        self.t
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn xs(&self) -> &Array2<f64> {
        &self.xs
    }

    pub fn epss(&self) -> &Array2<f64> {
        &self.epss
    }

    pub fn zs(&self) -> &Array2<f64> {
        &self.zs
    }

    /// The chosen target matrix for every row.
    pub fn targets(&self, target: TargetKind) -> Array2<f64> {
        match target {
            TargetKind::Clean => self.xs.clone(),
            TargetKind::Noise => self.epss.clone(),
            TargetKind::Velocity => &self.xs - &self.epss,
        }
    }

    /// Stacks two batches drawn with the same spectrum, time, and base seed.
    /// Together with [`sample_batch_slice`] this is the supported parallel
    /// path: statistics over the merged batch do not depend on where the
    /// row range was split.
    pub fn concat(&self, other: &SampleBatch) -> Result<SampleBatch> {
        if self.spectrum != other.spectrum {
            return Err(Error::invalid_argument(
                "cannot concatenate batches with different spectra",
            ));
        }
        if self.t != other.t || self.seed != other.seed {
            return Err(Error::invalid_argument(
                "cannot concatenate batches with different time or seed",
            ));
        }
        let stack = |a: &Array2<f64>, b: &Array2<f64>| {
            ndarray::concatenate(ndarray::Axis(0), &[a.view(), b.view()])
                .expect("row counts are free, columns match by spectrum equality")
        };
        Ok(SampleBatch {
            t: self.t,
            xs: stack(&self.xs, &other.xs),
            epss: stack(&self.epss, &other.epss),
            zs: stack(&self.zs, &other.zs),
            seed: self.seed,
            spectrum: self.spectrum.clone(),
        })
    }
}

fn fill_row(
    spectrum: &Spectrum,
    tv: f64,
    seed: u64,
    row: usize,
    x: &mut [f64],
    eps: &mut [f64],
    z: &mut [f64],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, row as u64));
    for (j, &lambda) in spectrum.eigenvalues().iter().enumerate() {
        let nx: f64 = rng.sample(StandardNormal);
        x[j] = lambda.sqrt() * nx;
    }
    for e in eps.iter_mut() {
        *e = rng.sample(StandardNormal);
    }
    for j in 0..z.len() {
        z[j] = tv * x[j] + (1.0 - tv) * eps[j];
    }
}

/// Draws n rows with x ~ N(0, diag(spectrum)), eps ~ N(0, I), and
/// z = t x + (1 - t) eps. Deterministic in (spectrum, t, n, seed).
pub fn sample_batch(
    spectrum: &Spectrum,
    t: CorruptionTime,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    sample_batch_slice(spectrum, t, seed, 0, n)
}

/// Rows [offset, offset + len) of the seeded row stream. Each row has its
/// own derived sub-seed, so slices taken at any boundaries concatenate into
/// exactly the batch a single call would produce.
pub fn sample_batch_slice(
    spectrum: &Spectrum,
    t: CorruptionTime,
    seed: u64,
    offset: usize,
    len: usize,
) -> Result<SampleBatch> {
    if len == 0 {
        return Err(Error::invalid_argument("batch needs at least one row"));
    }
    let d = spectrum.dim();
    let tv = t.value();
    let mut xs = vec![0.0; len * d];
    let mut epss = vec![0.0; len * d];
    let mut zs = vec![0.0; len * d];
    xs.par_chunks_mut(d)
        .zip(epss.par_chunks_mut(d))
        .zip(zs.par_chunks_mut(d))
        .enumerate()
        .for_each(|(i, ((x, eps), z))| {
            fill_row(spectrum, tv, seed, offset + i, x, eps, z);
        });
    let shape = (len, d);
    Ok(SampleBatch {
        t,
        xs: Array2::from_shape_vec(shape, xs).expect("shape matches construction"),
        epss: Array2::from_shape_vec(shape, epss).expect("shape matches construction"),
        zs: Array2::from_shape_vec(shape, zs).expect("shape matches construction"),
        seed,
        spectrum: spectrum.clone(),
    })
}

fn column_variances(matrix: &Array2<f64>) -> Vec<f64> {
    let n = matrix.nrows();
    matrix
        .axis_iter(ndarray::Axis(1))
        .map(|col| {
            let m = mean(col.iter().copied());
            compensated_sum(col.iter().map(|&v| (v - m) * (v - m))) / (n - 1) as f64
        })
        .collect()
}

/// Per-coordinate unbiased sample variance of the chosen target, as a
/// spectrum (coordinates are independent by construction, so the diagonal
/// is the whole covariance).
pub fn empirical_target_covariance(batch: &SampleBatch, target: TargetKind) -> Result<Spectrum> {
    let (estimates, _) = empirical_target_covariance_with_se(batch, target)?;
    Spectrum::new(estimates)
}

/// Coordinate-aligned variance estimates plus their standard errors
/// (Gaussian targets: SE = s^2 sqrt(2 / (n - 1))). Unlike the spectrum
/// form, the returned vectors keep the batch's coordinate order.
pub fn empirical_target_covariance_with_se(
    batch: &SampleBatch,
    target: TargetKind,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if batch.n() < 2 {
        return Err(Error::invalid_argument(
            "covariance estimation needs at least two rows",
        ));
    }
    let estimates = column_variances(&batch.targets(target));
    let se = estimates
        .iter()
        .map(|&v| v * (2.0 / (batch.n() - 1) as f64).sqrt())
        .collect();
    Ok((estimates, se))
}

/// Nonparametric conditional-variance estimate around one query point.
#[derive(Debug, Clone)]
pub struct KnnEstimate {
    pub query: LatentVector,
    pub k: usize,
    /// Per-coordinate Bessel-corrected variance of the target over the
    /// neighborhood, in the batch's coordinate order.
    pub estimates: Vec<f64>,
    pub neighbors_used: usize,
}

impl KnnEstimate {
    /// Sum of the per-coordinate estimates; comparable to the aggregate risk.
    pub fn trace(&self) -> f64 {
        compensated_sum(self.estimates.iter().copied())
    }
}

/// Brute-force kNN conditional variance: finds the k rows whose z is nearest
/// to the query in Euclidean distance and returns the per-coordinate sample
/// variance of the target over those rows. Exact search keeps this
/// validation tool free of index-structure bias; estimates are biased upward
/// by the neighborhood width.
pub fn knn_conditional_variance(
    batch: &SampleBatch,
    query: &[f64],
    k: usize,
    target: TargetKind,
) -> Result<KnnEstimate> {
    let n = batch.n();
    if query.len() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: query.len(),
        });
    }
    if k < 2 || k > n {
        return Err(Error::invalid_argument(format!(
            "k must satisfy 2 <= k <= {n}, got {k}"
        )));
    }
    let zs = batch.zs();
    let mut dist: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = zs.row(i);
            let d2: f64 = row
                .iter()
                .zip(query)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            (d2, i)
        })
        .collect();
    dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
    let neighbors = &dist[..k];

    let targets = batch.targets(target);
    let d = batch.dim();
    let mut estimates = Vec::with_capacity(d);
    for j in 0..d {
        let values: Vec<f64> = neighbors.iter().map(|&(_, i)| targets[(i, j)]).collect();
        estimates.push(crate::numeric::sample_variance(&values));
    }
    Ok(KnnEstimate {
        query: query.to_vec(),
        k,
        estimates,
        neighbors_used: k,
    })
}

/// Mean squared residual of the analytic Bayes estimator over the batch:
/// the empirical counterpart of the aggregate risk.
pub fn empirical_bayes_risk(batch: &SampleBatch, target: TargetKind) -> Result<f64> {
    empirical_bayes_risk_with_se(batch, target).map(|(risk, _)| risk)
}

/// Empirical Bayes risk plus the standard error of the mean, estimated from
/// the per-row squared residuals.
pub fn empirical_bayes_risk_with_se(
    batch: &SampleBatch,
    target: TargetKind,
) -> Result<(f64, f64)> {
    let n = batch.n();
    if n < 2 {
        return Err(Error::invalid_argument(
            "risk estimation needs at least two rows",
        ));
    }
    let coeffs: Vec<f64> = batch
        .spectrum()
        .eigenvalues()
        .iter()
        .map(|&lambda| bayes_coefficient(lambda, batch.t(), target))
        .collect::<Result<_>>()?;
    let targets = batch.targets(target);
    let zs = batch.zs();
    let per_row: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut sq = 0.0;
            for (j, &c) in coeffs.iter().enumerate() {
                let r = targets[(i, j)] - c * zs[(i, j)];
                sq += r * r;
            }
            sq
        })
        .collect();
    let risk = mean(per_row.iter().copied());
    let var = compensated_sum(per_row.iter().map(|&v| (v - risk) * (v - risk))) / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    Ok((risk, se))
}

const BATCH_MAGIC: u64 = u64::from_le_bytes(*b"TGLBATCH");
const BATCH_VERSION: u64 = 1;

fn write_header<W: Write>(w: &mut W, n: u64, d: u64, t: f64, seed: u64) -> Result<()> {
    for word in [BATCH_MAGIC, BATCH_VERSION, n, d] {
        w.write_all(&word.to_le_bytes())?;
    }
    w.write_all(&t.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> Result<()> {
    for &v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_matrix<R: Read>(r: &mut R, n: usize, d: usize) -> Result<Array2<f64>> {
    let mut values = vec![0.0; n * d];
    let mut buf = [0u8; 8];
    for v in values.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(Array2::from_shape_vec((n, d), values).expect("shape matches read loop"))
}

fn read_header<R: Read>(r: &mut R) -> Result<(usize, usize, f64, u64)> {
    let magic = read_u64(r)?;
    if magic != BATCH_MAGIC {
        return Err(Error::MalformedBatchFile(format!(
            "bad magic 0x{magic:016X}"
        )));
    }
    let version = read_u64(r)?;
    if version != BATCH_VERSION {
        return Err(Error::MalformedBatchFile(format!(
            "unsupported version {version}"
        )));
    }
    let n = read_u64(r)? as usize;
    let d = read_u64(r)? as usize;
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let t = f64::from_le_bytes(buf);
    let seed = read_u64(r)?;
    Ok((n, d, t, seed))
}

/// Writes a batch as the flat binary format: a little-endian 64-bit header
/// (magic "TGLBATCH", version, N, D, t, seed) followed by row-major xs,
/// epss, zs.
pub fn write_batch<W: Write>(batch: &SampleBatch, mut w: W) -> Result<()> {
    write_header(
        &mut w,
        batch.n() as u64,
        batch.dim() as u64,
        batch.t().value(),
        batch.seed(),
    )?;
    write_matrix(&mut w, batch.xs())?;
    write_matrix(&mut w, batch.epss())?;
    write_matrix(&mut w, batch.zs())?;
    Ok(())
}

/// Reads a batch written by [`write_batch`]. The header does not carry the
/// generating spectrum, so the caller supplies it; dimensions are checked.
pub fn read_batch<R: Read>(mut r: R, spectrum: &Spectrum) -> Result<SampleBatch> {
    let (n, d, t, seed) = read_header(&mut r)?;
    if d != spectrum.dim() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.dim(),
            got: d,
        });
    }
    let xs = read_matrix(&mut r, n, d)?;
    let epss = read_matrix(&mut r, n, d)?;
    let zs = read_matrix(&mut r, n, d)?;
    Ok(SampleBatch {
        t: CorruptionTime::new(t)?,
        xs,
        epss,
        zs,
        seed,
        spectrum: spectrum.clone(),
    })
}

/// Writes a single matrix in the batch format (same header, zs section
/// only). Used to export sampler endpoints for external analysis.
pub fn write_endpoint_matrix<W: Write>(
    zs: &Array2<f64>,
    t: CorruptionTime,
    seed: u64,
    mut w: W,
) -> Result<()> {
    write_header(&mut w, zs.nrows() as u64, zs.ncols() as u64, t.value(), seed)?;
    write_matrix(&mut w, zs)
}

/// Reads a file written by [`write_endpoint_matrix`].
pub fn read_endpoint_matrix<R: Read>(mut r: R) -> Result<(Array2<f64>, f64, u64)> {
    let (n, d, t, seed) = read_header(&mut r)?;
    let zs = read_matrix(&mut r, n, d)?;
    Ok((zs, t, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> CorruptionTime {
        CorruptionTime::new(v).unwrap()
    }

    fn spec(values: &[f64]) -> Spectrum {
        Spectrum::new(values.to_vec()).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let s = spec(&[4.0, 1.0]);
        let a = sample_batch(&s, t(0.5), 64, 7).unwrap();
        let b = sample_batch(&s, t(0.5), 64, 7).unwrap();
        assert_eq!(a.xs(), b.xs());
        assert_eq!(a.epss(), b.epss());
        assert_eq!(a.zs(), b.zs());
        let c = sample_batch(&s, t(0.5), 64, 8).unwrap();
        assert_ne!(a.xs(), c.xs());
    }

    #[test]
    fn zero_variance_direction_yields_exact_zeros() {
        let s = spec(&[0.0]);
        let b = sample_batch(&s, t(0.5), 100, 3).unwrap();
        assert!(b.xs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn data_endpoint_reproduces_x_exactly() {
        let s = spec(&[1.0]);
        let b = sample_batch(&s, t(1.0), 50, 11).unwrap();
        assert_eq!(b.zs(), b.xs());
    }

    #[test]
    fn rejects_empty_batch() {
        let s = spec(&[1.0]);
        assert!(sample_batch(&s, t(0.5), 0, 1).is_err());
    }

    #[test]
    fn mixture_variance_matches_samples() {
        // Cross-check of the closed form D = t^2 lambda + (1-t)^2 = 1.25.
        let s = spec(&[4.0]);
        let b = sample_batch(&s, t(0.5), 1_000_000, 21).unwrap();
        let var = column_variances(b.zs())[0];
        assert!((var - 1.25).abs() < 0.02 * 1.25, "var = {var}");
    }

    #[test]
    fn slices_concatenate_to_the_full_batch() {
        let s = spec(&[4.0, 1.0, 0.25]);
        let full = sample_batch(&s, t(0.3), 1000, 99).unwrap();
        for split in [1, 137, 500, 999] {
            let head = sample_batch_slice(&s, t(0.3), 99, 0, split).unwrap();
            let tail = sample_batch_slice(&s, t(0.3), 99, split, 1000 - split).unwrap();
            let merged = head.concat(&tail).unwrap();
            assert_eq!(merged.xs(), full.xs());
            assert_eq!(merged.epss(), full.epss());
            assert_eq!(merged.zs(), full.zs());
        }
    }

    #[test]
    fn concat_rejects_mismatched_batches() {
        let s = spec(&[1.0]);
        let a = sample_batch(&s, t(0.3), 10, 1).unwrap();
        let b = sample_batch(&s, t(0.4), 10, 1).unwrap();
        assert!(a.concat(&b).is_err());
        let c = sample_batch(&s, t(0.3), 10, 2).unwrap();
        assert!(a.concat(&c).is_err());
    }

    #[test]
    fn empirical_covariance_matches_marginals() {
        let s = spec(&[4.0, 1.0]);
        let b = sample_batch(&s, t(0.5), 200_000, 5).unwrap();
        let vel = empirical_target_covariance(&b, TargetKind::Velocity).unwrap();
        for (got, want) in vel.eigenvalues().iter().zip(&[5.0, 2.0]) {
            assert!((got - want).abs() < 0.02 * want, "{got} vs {want}");
        }
        let noise = empirical_target_covariance(&b, TargetKind::Noise).unwrap();
        for &got in noise.eigenvalues() {
            assert!((got - 1.0).abs() < 0.02, "{got}");
        }
    }

    #[test]
    fn empirical_covariance_of_zero_spectrum_is_exactly_zero() {
        let s = spec(&[0.0, 0.0]);
        let b = sample_batch(&s, t(0.5), 100, 5).unwrap();
        let clean = empirical_target_covariance(&b, TargetKind::Clean).unwrap();
        assert_eq!(clean.eigenvalues(), &[0.0, 0.0]);
    }

    #[test]
    fn empirical_covariance_needs_two_rows() {
        let s = spec(&[1.0]);
        let b = sample_batch(&s, t(0.5), 1, 5).unwrap();
        assert!(empirical_target_covariance(&b, TargetKind::Clean).is_err());
    }

    #[test]
    fn knn_with_all_points_equals_marginal_covariance() {
        let s = spec(&[4.0, 1.0]);
        let b = sample_batch(&s, t(0.5), 500, 13).unwrap();
        let est = knn_conditional_variance(&b, &[0.0, 0.0], 500, TargetKind::Velocity).unwrap();
        let (marginal, _) =
            empirical_target_covariance_with_se(&b, TargetKind::Velocity).unwrap();
        for (a, b) in est.estimates.iter().zip(&marginal) {
            assert!((a - b).abs() < 1e-10 * b.abs(), "{a} vs {b}");
        }
        assert_eq!(est.neighbors_used, 500);
    }

    #[test]
    fn knn_rejects_out_of_range_k() {
        let s = spec(&[1.0]);
        let b = sample_batch(&s, t(0.5), 10, 13).unwrap();
        assert!(knn_conditional_variance(&b, &[0.0], 1, TargetKind::Clean).is_err());
        assert!(knn_conditional_variance(&b, &[0.0], 11, TargetKind::Clean).is_err());
        assert!(knn_conditional_variance(&b, &[0.0, 0.0], 5, TargetKind::Clean).is_err());
    }

    #[test]
    fn empirical_risk_matches_closed_form() {
        let s = spec(&[4.0, 1.0, 0.25, 0.01]);
        let b = sample_batch(&s, t(0.5), 1_000_000, 17).unwrap();
        let clean = empirical_bayes_risk(&b, TargetKind::Clean).unwrap();
        assert!((clean - 1.509901).abs() < 0.01 * 1.509901, "clean = {clean}");
        let velocity = empirical_bayes_risk(&b, TargetKind::Velocity).unwrap();
        assert!(
            (velocity - 4.0 * clean).abs() < 0.02 * velocity,
            "velocity = {velocity}, clean = {clean}"
        );
    }

    #[test]
    fn empirical_risk_is_zero_at_data_endpoint() {
        let s = spec(&[4.0, 1.0]);
        let b = sample_batch(&s, t(1.0), 100, 17).unwrap();
        assert_eq!(empirical_bayes_risk(&b, TargetKind::Clean).unwrap(), 0.0);
    }

    #[test]
    fn empirical_risk_rejects_degenerate_mixture() {
        let s = spec(&[1.0, 0.0]);
        let b = sample_batch(&s, t(1.0), 100, 17).unwrap();
        assert!(empirical_bayes_risk(&b, TargetKind::Clean).is_err());
    }

    #[test]
    fn batch_file_round_trips_bitwise() {
        let s = spec(&[4.0, 0.25]);
        let b = sample_batch(&s, t(0.7), 32, 23).unwrap();
        let mut buf = Vec::new();
        write_batch(&b, &mut buf).unwrap();
        let back = read_batch(buf.as_slice(), &s).unwrap();
        assert_eq!(back.xs(), b.xs());
        assert_eq!(back.epss(), b.epss());
        assert_eq!(back.zs(), b.zs());
        assert_eq!(back.seed(), b.seed());
        assert_eq!(back.t(), b.t());
    }

    #[test]
    fn batch_file_rejects_bad_magic() {
        let mut buf = vec![0u8; 48];
        buf[0] = b'X';
        assert!(read_batch(buf.as_slice(), &spec(&[1.0])).is_err());
    }

    #[test]
    fn endpoint_matrix_round_trips() {
        let zs = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut buf = Vec::new();
        write_endpoint_matrix(&zs, t(1.0), 9, &mut buf).unwrap();
        let (back, tv, seed) = read_endpoint_matrix(buf.as_slice()).unwrap();
        assert_eq!(back, zs);
        assert_eq!(tv, 1.0);
        assert_eq!(seed, 9);
    }
}
