//! Small numeric helpers shared across modules.

/// Neumaier compensated summation. Keeps risk and variance sums accurate
/// regardless of magnitude spread across addends.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean with compensated accumulation. Returns 0 for empty input.
pub(crate) fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    compensated_sum(values) / n as f64
}

/// Two-pass Bessel-corrected sample variance of an f64 slice.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    assert!(n >= 2, "sample variance needs at least two values");
    let m = mean(values.iter().copied());
    compensated_sum(values.iter().map(|&v| (v - m) * (v - m))) / (n - 1) as f64
}

/// SplitMix64 finalizer used to derive per-row / per-step sub-seeds from a
/// base seed. Deterministic and cheap; collisions are negligible at the
/// row counts this crate handles.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a byte stream; used to digest minibatches for
/// matched-stream verification.
pub(crate) struct Fnv1a(u64);

impl Fnv1a {
    pub(crate) fn new() -> Self {
        Fnv1a(0xCBF2_9CE4_8422_2325)
    }

    pub(crate) fn write_f64(&mut self, v: f64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_handles_magnitude_spread() {
        // Naive summation loses the small terms entirely here.
        let values = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn sample_variance_matches_hand_value() {
        let v = sample_variance(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((v - 2.5).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ_across_indices() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
