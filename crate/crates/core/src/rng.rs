//! Seeded random streams for generated data.
//!
//! Every random quantity in this crate (random digraphs, measurement
//! matrices, synthetic images and datasets) is drawn from [`DataRng`]:
//!
//! - generator: ChaCha8 (`rand_chacha` 0.3), seeded with `seed_from_u64`;
//! - uniform doubles: the top 53 bits of `next_u64`, scaled by `2^-53`,
//!   giving values in `[0, 1)`;
//! - normal deviates: Box–Muller on two uniforms `u1 = 1 - U`, `u2 = U`,
//!   returning `r cos(2π u2)` first and caching `r sin(2π u2)` for the next
//!   call;
//! - bounded integers: `next_u64 % n`.
//!
//! Streams are versioned through [`DataRng::ALGORITHM`], which the harness
//! writes into every CSV header.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct DataRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl DataRng {
    pub const ALGORITHM: &'static str = "chacha8-seed_from_u64/box-muller/v1";

    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform double in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * t.sin());
        r * t.cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "empty range");
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Fisher–Yates shuffle driven by [`DataRng::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
