//! Seeded workloads shared by the benchmarks.

use gopctl_core::backend::MockParams;
use gopctl_core::{Dims, GaussianPrior, QuantizedLatent, RateMetricCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A latent drawn near its prior mean, with per-element scales spanning 2^-4..2^3.
pub fn latent_fixture(dims: Dims, seed: u64) -> (QuantizedLatent, GaussianPrior) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.len();
    let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let scale: Vec<f64> = (0..n).map(|_| 2f64.powf(rng.random_range(-4.0..3.0))).collect();
    let values: Vec<f64> = mean.iter().zip(&scale).map(|(m, s)| m + s * rng.random_range(-1.5..1.5)).collect();
    let latent = QuantizedLatent::quantize(dims, &values).expect("valid fixture");
    let prior = GaussianPrior::new(dims, mean, scale).expect("valid fixture");
    (latent, prior)
}

/// Unit-cost mock with random motion.
pub fn mock_fixture(frames: usize, seed: u64) -> MockParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MockParams {
        motion_coupling: 0.1,
        motion: (0..frames).map(|_| rng.random_range(0.0..1.5)).collect(),
        ..MockParams::unit()
    }
}

/// Two log-linear rate curves with different slopes.
pub fn curve_pair() -> (RateMetricCurve, RateMetricCurve) {
    let make = |base: f64, step: f64| {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (base * 2f64.powf(i as f64 / step), 30.0 + i as f64)).collect();
        RateMetricCurve::from_pairs(&pts).expect("valid curve")
    };
    (make(0.05, 3.0), make(0.04, 2.5))
}
