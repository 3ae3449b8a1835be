use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Name and version of the target-placement generator, written into
/// recording headers. Changing the sampling procedure requires a new name.
pub const RNG_NAME: &str = "chacha8-v1";

/// Seeded generator whose output is identical on every platform: ChaCha8
/// words converted to `[0, 1)` by taking the top 53 bits.
#[derive(Debug, Clone)]
pub struct TargetRng(ChaCha8Rng);

impl TargetRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal sample (Box-Muller, libm transcendental functions).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
    }
}
