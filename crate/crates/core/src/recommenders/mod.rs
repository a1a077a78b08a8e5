//! Weighted matrix factorization and recommendation policies.

mod als;
mod policy;
mod sgd;

pub use als::{als_half_sweep_items, als_half_sweep_users, als_init, fit_als_data, fit_als_from, fit_weighted_als};
pub use policy::{
    inclusion_probabilities, policy_probs, recommend, ModelPolicy, PanExposurePolicy, PolicyConfig,
    PolicyKind, RecommendationPolicy,
};
pub use sgd::{fit_sgd_data, fit_weighted_sgd, sgd_gradient, sgd_init};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::WeightAssignment;
use crate::history::{InteractionHistory, LatentParams};

/// Adam settings for [`fit_weighted_sgd`]. The defaults are stand-ins; no
/// reference values are known for the benchmark they are used on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MFConfig {
    /// Latent dimension K.
    pub k: usize,
    /// Ridge penalty λ on all user and item vectors.
    pub lambda: f64,
    pub als_sweeps: usize,
    pub sgd: SgdConfig,
    /// Standard deviation of the Gaussian initialization; `None` means `0.1/√K`.
    pub init_scale: Option<f64>,
    /// σ² stored in the fitted parameters for log-likelihood evaluation.
    pub noise_variance: f64,
    pub seed: u64,
}

impl Default for MFConfig {
    fn default() -> Self {
        Self {
            k: 8,
            lambda: 0.1,
            als_sweeps: 10,
            sgd: SgdConfig::default(),
            init_scale: None,
            noise_variance: 1.0,
            seed: 0,
        }
    }
}

impl MFConfig {
    pub fn init_scale(&self) -> f64 {
        self.init_scale.unwrap_or(0.1 / (self.k as f64).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be >= 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be positive".into()));
        }
        Ok(())
    }
}

/// One weighted squared-error term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub weight: f64,
}

/// Observed ratings paired with their weights, indexed by user and by item.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    users: usize,
    items: usize,
    entries: Vec<Entry>,
    by_user: Vec<Vec<usize>>,
    by_item: Vec<Vec<usize>>,
}

impl TrainingData {
    pub fn new(users: usize, items: usize, entries: Vec<Entry>) -> Result<Self> {
        let mut by_user = vec![Vec::new(); users];
        let mut by_item = vec![Vec::new(); items];
        for (n, e) in entries.iter().enumerate() {
            if e.user >= users || e.item >= items {
                return Err(Error::IndexOutOfRange {
                    user: e.user,
                    item: e.item,
                });
            }
            if !(e.weight >= 0.0 && e.weight.is_finite() && e.rating.is_finite()) {
                return Err(Error::InvalidParameter(format!("bad training entry {e:?}")));
            }
            by_user[e.user].push(n);
            by_item[e.item].push(n);
        }
        Ok(Self {
            users,
            items,
            entries,
            by_user,
            by_item,
        })
    }

    /// Every observation of `history` with the matching weight.
    pub fn from_history(history: &InteractionHistory, weights: &WeightAssignment) -> Result<Self> {
        weights.check_coverage(history)?;
        let entries = history
            .observations()
            .zip(weights.entries())
            .map(|(o, w)| Entry {
                user: o.user,
                item: o.item,
                rating: o.rating,
                weight: w.weight,
            })
            .collect();
        Self::new(history.users(), history.items(), entries)
    }

    /// Every observation of `history` with weight 1.
    pub fn unweighted(history: &InteractionHistory) -> Result<Self> {
        let entries = history
            .observations()
            .map(|o| Entry {
                user: o.user,
                item: o.item,
                rating: o.rating,
                weight: 1.0,
            })
            .collect();
        Self::new(history.users(), history.items(), entries)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn user_entries(&self, u: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.by_user[u].iter().map(|&n| &self.entries[n])
    }

    pub fn item_entries(&self, i: usize) -> impl Iterator<Item = &Entry> + '_ {
        self.by_item[i].iter().map(|&n| &self.entries[n])
    }
}

/// `θ_uᵀβ_i`
pub fn predict(params: &LatentParams, u: usize, i: usize) -> f64 {
    params.predict(u, i)
}

/// `Σ w (R − θ_uᵀβ_i)² + λ(‖Θ‖² + ‖B‖²)`
pub fn weighted_objective(data: &TrainingData, params: &LatentParams, lambda: f64) -> f64 {
    let fit: f64 = data
        .entries()
        .iter()
        .map(|e| {
            let r = e.rating - params.predict(e.user, e.item);
            e.weight * r * r
        })
        .sum();
    let norm: f64 = params
        .user_vectors()
        .iter()
        .chain(params.item_vectors())
        .map(|x| x * x)
        .sum();
    fit + lambda * norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_examples() {
        let z = LatentParams::zeros(2, 2, 3, 1.0).unwrap();
        assert_eq!(predict(&z, 1, 1), 0.0);
        let p = LatentParams::new(1, vec![2.0], vec![3.0], 1.0).unwrap();
        assert_eq!(predict(&p, 0, 0), 6.0);
        let q = LatentParams::new(1, vec![5.0], vec![3.0], 1.0).unwrap();
        assert_eq!(predict(&q, 0, 0), 2.5 * predict(&p, 0, 0));
    }

    #[test]
    fn objective_by_hand() {
        let p = LatentParams::new(1, vec![1.0], vec![2.0], 1.0).unwrap();
        let data = TrainingData::new(
            1,
            1,
            vec![Entry {
                user: 0,
                item: 0,
                rating: 3.0,
                weight: 2.0,
            }],
        )
        .unwrap();
        // 2·(3−2)² + 0.5·(1 + 4)
        assert_eq!(weighted_objective(&data, &p, 0.5), 4.5);
    }

    #[test]
    fn default_init_scale() {
        let cfg = MFConfig {
            k: 16,
            ..Default::default()
        };
        assert_eq!(cfg.init_scale(), 0.025);
    }
}
