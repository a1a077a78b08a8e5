//! Ground-truth rating worlds.

mod beta_prime;
mod dirichlet;
mod latent;

pub use beta_prime::{beta_prime_params, BetaPrimeMode, BetaPrimeSpec};
pub use dirichlet::{exposure_probs_pan, score_pan, DirichletEnv, DirichletEnvConfig};
pub use latent::{LatentFactorEnv, LatentFactorEnvConfig};

use crate::error::Result;
use crate::history::{RatingMatrix, RecommendationMatrix};
use crate::rng::SeededRng;

/// A stationary world that answers "what does user `u` rate item `i`".
/// Construction fixes all latent state; only the caller's rng advances.
pub trait RatingEnvironment {
    fn users(&self) -> usize;
    fn items(&self) -> usize;
    fn sample_rating(&self, user: usize, item: usize, rng: &mut SeededRng) -> Result<f64>;
    /// Mean of [`RatingEnvironment::sample_rating`] for the pair.
    fn expected_rating(&self, user: usize, item: usize) -> f64;
    /// Checksum of the fixed latent state, for paired-replication audits.
    fn checksum(&self) -> u64;
}

/// Sample `R_t`: a rating for every recommended pair, zero elsewhere.
/// Pairs are visited in row-major order so draws are reproducible.
pub fn rate_step<E: RatingEnvironment + ?Sized>(
    env: &E,
    rec: &RecommendationMatrix,
    rng: &mut SeededRng,
) -> Result<RatingMatrix> {
    let mut out = RatingMatrix::new(rec.users(), rec.items(), rec.timestep())?;
    for (u, i) in rec.pairs() {
        let r = env.sample_rating(u, i, rng)?;
        out.set(u, i, r)?;
    }
    Ok(out)
}

pub(crate) fn fnv_checksum<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}
