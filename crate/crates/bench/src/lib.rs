//! Shared fixtures for the benchmark targets.

use wqed_core::model::{cosine_taper, ModelParams, PulseEnvelope};

/// The fitted operating point used throughout the benchmarks.
pub fn operating_point() -> ModelParams {
    ModelParams::from_mhz(19.8, 0.9, 0.6, 0.0).unwrap()
}

pub fn pulse(duration: f64, dt: f64) -> PulseEnvelope {
    cosine_taper(duration, 0.02, dt).unwrap()
}
