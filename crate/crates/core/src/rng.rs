//! Seeded random streams.
//!
//! Every stochastic component draws from its own `(seed, stream)` pair on a
//! ChaCha8 generator, so adding draws to one component never perturbs another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Named stream ids used across the crate. Harness arms offset from
/// [`streams::ARM_BASE`].
pub mod streams {
    pub const ENVIRONMENT: u64 = 1;
    pub const TEST_SET: u64 = 2;
    pub const FIRST_STEP: u64 = 3;
    pub const FIRST_STEP_RATINGS: u64 = 4;
    pub const EXPOSURE: u64 = 5;
    pub const EXPOSURE_RATINGS: u64 = 6;
    pub const TEST_RATINGS: u64 = 7;
    pub const MODEL_INIT: u64 = 8;
    pub const ARM_BASE: u64 = 64;
    pub const ARM_STRIDE: u64 = 8;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(self.seed, stream)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
