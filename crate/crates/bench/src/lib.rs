//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavir_core::channel::{synthetic_csi, EffectiveCsi};

/// Seeded Rician instance with `M` antennas, `N` elements and `K` UEs.
pub fn csi_fixture(m: usize, n: usize, k: usize, seed: u64) -> EffectiveCsi {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synthetic_csi(m, n, k, 10.0, 0.1, &mut rng)
}

/// Bimodal Bellman-target-like sample set.
pub fn target_fixture(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            let base = if rng.random::<bool>() { 1.0e6 } else { 3.0e6 };
            base + rng.random_range(-2.0e5..2.0e5)
        })
        .collect()
}
