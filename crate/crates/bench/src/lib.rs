//! Shared fixtures for the pipeline benchmarks.

use tglab_core::types::{CorruptionTime, Spectrum};

/// Mid-path corruption time used across benchmarks.
pub const BENCH_T_VALUE: f64 = 0.5;

/// Geometric spectrum with a three-decade spread, sized for the benchmark.
pub fn bench_spectrum(dim: usize) -> Spectrum {
    Spectrum::geometric(dim, 4.0, 0.96).expect("valid benchmark spectrum")
}

/// The corruption time as a validated value.
pub fn bench_t() -> CorruptionTime {
    CorruptionTime::new(BENCH_T_VALUE).expect("0.5 is a valid corruption time")
}
