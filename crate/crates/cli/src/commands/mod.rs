//! Subcommand implementations.

pub mod geometry;
pub mod mc_validate;
pub mod probe;
pub mod sample;

use std::path::PathBuf;

/// What a subcommand produced, for exit-code and logging decisions.
pub struct Outcome {
    pub written: Vec<PathBuf>,
    /// PASS/FAIL rows that failed (mc-validate only).
    pub failed_checks: usize,
    pub strict: bool,
}

impl Outcome {
    pub fn new(written: Vec<PathBuf>, strict: bool) -> Self {
        Self {
            written,
            failed_checks: 0,
            strict,
        }
    }
}
