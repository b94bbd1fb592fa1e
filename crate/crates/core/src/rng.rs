//! Counter-based random streams for reproducible trajectories.
//!
//! Trajectory `i` of a run seeded with `seed` draws from ChaCha8 stream `i`
//! under key `seed`, so a trajectory's noise does not depend on which worker
//! runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::{lit, Real};

/// Independent generator for trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Gaussian Wiener increments with variance `dt`.
#[derive(Debug, Clone)]
pub struct WienerIncrements {
    rng: ChaCha8Rng,
    sqrt_dt: f64,
}

impl WienerIncrements {
    pub fn new(seed: u64, index: u64, dt: f64) -> Self {
        Self { rng: trajectory_rng(seed, index), sqrt_dt: dt.sqrt() }
    }

    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * self.sqrt_dt
    }

    #[inline]
    pub fn sample<T: Real>(&mut self) -> T {
        lit(self.next_f64())
    }

    /// The next `n` increments.
    pub fn take_vec<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.sample()).collect()
    }
}
