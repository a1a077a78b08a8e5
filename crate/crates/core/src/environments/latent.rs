//! Gaussian latent-factor world with clipped ratings.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{fnv_checksum, RatingEnvironment};
use crate::error::{Error, Result};
use crate::history::LatentParams;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatentFactorEnvConfig {
    pub users: usize,
    pub items: usize,
    pub dim: usize,
    /// Target mean of `θ_u · β_i` over the population.
    pub mean_rating: f64,
    /// Target standard deviation of `θ_u · β_i` over the population.
    pub rating_spread: f64,
    /// Variance of the Gaussian noise added to each rating.
    pub noise_variance: f64,
    pub clip: (f64, f64),
    /// Redraws allowed before giving up on the 99%-inside-clip requirement.
    pub max_attempts: usize,
}

impl Default for LatentFactorEnvConfig {
    fn default() -> Self {
        Self {
            users: 100,
            items: 100,
            dim: 8,
            mean_rating: 3.0,
            rating_spread: 0.8,
            noise_variance: 0.25,
            clip: (1.0, 5.0),
            max_attempts: 100,
        }
    }
}

/// Ground truth `Θ` whose ratings are `clip(θ_u · β_i + ε, lo, hi)`.
#[derive(Debug, Clone)]
pub struct LatentFactorEnv {
    config: LatentFactorEnvConfig,
    truth: LatentParams,
}

impl LatentFactorEnv {
    /// Factor entries are iid `N(m, s²)` with `K m² = mean_rating` and
    /// `K (2 m² s² + s⁴) = rating_spread²`, so the expected ratings have the
    /// configured first two moments.
    pub fn new(config: LatentFactorEnvConfig, rng: &mut SeededRng) -> Result<Self> {
        let (users, items, dim) = (config.users, config.items, config.dim);
        if users == 0 || items == 0 || dim == 0 {
            return Err(Error::InvalidParameter("U, I, K must all be positive".into()));
        }
        let (lo, hi) = config.clip;
        if !(lo < hi) || lo <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "clip range must satisfy 0 < lo < hi, got ({lo}, {hi})"
            )));
        }
        if !(config.mean_rating > 0.0 && config.rating_spread >= 0.0 && config.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter("invalid rating moments".into()));
        }
        let k = dim as f64;
        let m2 = config.mean_rating / k;
        let m = m2.sqrt();
        let s2 = -m2 + (m2 * m2 + config.rating_spread.powi(2) / k).sqrt();
        let factor = Normal::new(m, s2.max(0.0).sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;

        for _ in 0..config.max_attempts.max(1) {
            let user_vectors: Vec<f64> = (0..users * dim).map(|_| factor.sample(rng)).collect();
            let item_vectors: Vec<f64> = (0..items * dim).map(|_| factor.sample(rng)).collect();
            let truth = LatentParams::new(
                dim,
                user_vectors,
                item_vectors,
                config.noise_variance.max(f64::MIN_POSITIVE),
            )?;
            let inside = (0..users)
                .flat_map(|u| (0..items).map(move |i| (u, i)))
                .filter(|&(u, i)| {
                    let r = truth.predict(u, i);
                    r >= lo && r <= hi
                })
                .count();
            if inside as f64 >= 0.99 * (users * items) as f64 {
                return Ok(Self { config, truth });
            }
        }
        Err(Error::InvalidParameter(format!(
            "could not place 99% of expected ratings inside [{lo}, {hi}] in {} attempts",
            config.max_attempts
        )))
    }

    pub fn config(&self) -> &LatentFactorEnvConfig {
        &self.config
    }

    pub fn truth(&self) -> &LatentParams {
        &self.truth
    }

    /// `θ_u · β_i` before noise and clipping.
    pub fn affinity(&self, u: usize, i: usize) -> f64 {
        self.truth.predict(u, i)
    }
}

impl RatingEnvironment for LatentFactorEnv {
    fn users(&self) -> usize {
        self.config.users
    }

    fn items(&self) -> usize {
        self.config.items
    }

    fn sample_rating(&self, user: usize, item: usize, rng: &mut SeededRng) -> Result<f64> {
        if user >= self.config.users || item >= self.config.items {
            return Err(Error::IndexOutOfRange { user, item });
        }
        let (lo, hi) = self.config.clip;
        let mean = self.truth.predict(user, item);
        let noise = if self.config.noise_variance > 0.0 {
            Normal::new(0.0, self.config.noise_variance.sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        Ok((mean + noise).clamp(lo, hi))
    }

    /// Mean of the unclipped rating; equals the clipped mean for pairs far
    /// from the clip boundaries.
    fn expected_rating(&self, user: usize, item: usize) -> f64 {
        self.truth.predict(user, item)
    }

    fn checksum(&self) -> u64 {
        fnv_checksum(
            self.truth
                .user_vectors()
                .iter()
                .chain(self.truth.item_vectors()),
        )
    }
}
