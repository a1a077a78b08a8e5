//! Simplex-preference world with Beta ratings and a similarity-driven
//! exposure process.

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{fnv_checksum, BetaPrimeSpec, RatingEnvironment};
use crate::error::{Error, Result};
use crate::history::InteractionHistory;
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletEnvConfig {
    pub users: usize,
    pub items: usize,
    /// Latent dimension K.
    pub dim: usize,
    /// Symmetric concentration of the population-level user mean.
    pub user_concentration: f64,
    /// Symmetric concentration of the population-level item mean.
    pub item_concentration: f64,
    /// Multiplier on the population mean when drawing individual vectors.
    pub preference_scale: f64,
    pub beta: BetaPrimeSpec,
    /// Size of the boosted exposure set; `None` uses 100 or `ceil(0.1 I)` when `I < 1000`.
    pub top_k: Option<usize>,
    /// Boost weight given to the top-ranked items.
    pub boost: f64,
}

impl Default for DirichletEnvConfig {
    fn default() -> Self {
        Self {
            users: 300,
            items: 100,
            dim: 10,
            user_concentration: 20.0,
            item_concentration: 100.0,
            preference_scale: 1.0,
            beta: BetaPrimeSpec::default(),
            top_k: None,
            boost: 10.0,
        }
    }
}

impl DirichletEnvConfig {
    pub fn effective_top_k(&self) -> usize {
        match self.top_k {
            Some(k) => k,
            None if self.items < 1000 => (self.items as f64 * 0.1).ceil() as usize,
            None => 100,
        }
    }
}

fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    loop {
        let mut draws = Vec::with_capacity(alpha.len());
        for &a in alpha {
            let g = Gamma::new(a, 1.0)
                .map_err(|e| Error::InvalidParameter(format!("gamma shape {a}: {e}")))?;
            draws.push(g.sample(rng));
        }
        let total: f64 = draws.iter().sum();
        // every coordinate underflowed; redraw
        if total > 0.0 {
            return Ok(draws.into_iter().map(|g| g / total).collect());
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Users and items on the K-simplex, ratings `Beta′(θ_u · β_i)`, and a
/// fixed item-item similarity matrix `S_ij ~ Beta′(β_i · β_j)`.
#[derive(Debug, Clone)]
pub struct DirichletEnv {
    config: DirichletEnvConfig,
    user_mean: Vec<f64>,
    item_mean: Vec<f64>,
    user_vectors: Vec<f64>,
    item_vectors: Vec<f64>,
    similarity: Vec<f64>,
    mean_bounds: (f64, f64),
}

impl DirichletEnv {
    pub fn new(config: DirichletEnvConfig, rng: &mut SeededRng) -> Result<Self> {
        let (users, items, dim) = (config.users, config.items, config.dim);
        if users == 0 || items == 0 || dim == 0 {
            return Err(Error::InvalidParameter("U, I, K must all be positive".into()));
        }
        if !(config.user_concentration > 0.0 && config.item_concentration > 0.0) {
            return Err(Error::InvalidParameter("concentrations must be positive".into()));
        }
        if !(config.preference_scale > 0.0) {
            return Err(Error::InvalidParameter("preference scale must be positive".into()));
        }
        if config.effective_top_k() > items {
            return Err(Error::InvalidParameter(format!(
                "top_k {} exceeds catalogue {items}",
                config.effective_top_k()
            )));
        }
        let mean_bounds = config.beta.admissible_means(1.0)?;

        let user_mean = dirichlet(&vec![config.user_concentration; dim], rng)?;
        let item_mean = dirichlet(&vec![config.item_concentration; dim], rng)?;
        let user_alpha: Vec<f64> = user_mean.iter().map(|m| m * config.preference_scale).collect();
        let item_alpha: Vec<f64> = item_mean.iter().map(|m| m * config.preference_scale).collect();
        let mut user_vectors = Vec::with_capacity(users * dim);
        for _ in 0..users {
            user_vectors.extend(dirichlet(&user_alpha, rng)?);
        }
        let mut item_vectors = Vec::with_capacity(items * dim);
        for _ in 0..items {
            item_vectors.extend(dirichlet(&item_alpha, rng)?);
        }

        let mut env = Self {
            config,
            user_mean,
            item_mean,
            user_vectors,
            item_vectors,
            similarity: Vec::new(),
            mean_bounds,
        };
        let mut similarity = Vec::with_capacity(items * items);
        for i in 0..items {
            for j in 0..items {
                let mu = env.clamp_mean(dot(env.item(i), env.item(j)));
                similarity.push(env.draw_beta(mu, rng)?);
            }
        }
        env.similarity = similarity;
        Ok(env)
    }

    pub fn config(&self) -> &DirichletEnvConfig {
        &self.config
    }

    pub fn user(&self, u: usize) -> &[f64] {
        let k = self.config.dim;
        &self.user_vectors[u * k..(u + 1) * k]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let k = self.config.dim;
        &self.item_vectors[i * k..(i + 1) * k]
    }

    pub fn user_mean(&self) -> &[f64] {
        &self.user_mean
    }

    pub fn item_mean(&self) -> &[f64] {
        &self.item_mean
    }

    pub fn similarity(&self, i: usize, j: usize) -> f64 {
        self.similarity[i * self.config.items + j]
    }

    /// Raw affinity `θ_u · β_i`.
    pub fn affinity(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    /// Means outside the admissible interval of the Beta′ spec are clamped to it.
    pub fn clamp_mean(&self, mu: f64) -> f64 {
        mu.clamp(self.mean_bounds.0, self.mean_bounds.1)
    }

    pub fn mean_bounds(&self) -> (f64, f64) {
        self.mean_bounds
    }

    fn draw_beta(&self, mu: f64, rng: &mut SeededRng) -> Result<f64> {
        let (a, b) = self.config.beta.params(mu)?;
        let dist = Beta::new(a, b)
            .map_err(|e| Error::InvalidParameter(format!("beta({a}, {b}): {e}")))?;
        let x: f64 = dist.sample(rng);
        // open support: zero is reserved for "unobserved"
        Ok(x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
    }

    /// Draw from `Beta(a, b)` with `(a, b) = beta_prime_params(θ_u · β_i, σ²)`,
    /// without clamping the mean.
    pub fn sample_rating_unclamped(&self, u: usize, i: usize, rng: &mut SeededRng) -> Result<f64> {
        self.check(u, i)?;
        self.draw_beta(self.affinity(u, i), rng)
    }

    fn check(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.config.users || i >= self.config.items {
            return Err(Error::IndexOutOfRange { user: u, item: i });
        }
        Ok(())
    }
}

impl RatingEnvironment for DirichletEnv {
    fn users(&self) -> usize {
        self.config.users
    }

    fn items(&self) -> usize {
        self.config.items
    }

    fn sample_rating(&self, user: usize, item: usize, rng: &mut SeededRng) -> Result<f64> {
        self.check(user, item)?;
        self.draw_beta(self.expected_rating(user, item), rng)
    }

    fn expected_rating(&self, user: usize, item: usize) -> f64 {
        self.clamp_mean(self.affinity(user, item))
    }

    fn checksum(&self) -> u64 {
        fnv_checksum(
            self.user_vectors
                .iter()
                .chain(&self.item_vectors)
                .chain(&self.similarity),
        )
    }
}

/// `Σ_{s<t} Σ_j A_{s,uj} R_{s,uj} exp(S_ij)` for one item.
pub fn score_pan(env: &DirichletEnv, history: &InteractionHistory, user: usize, item: usize) -> f64 {
    history
        .user_observations(user)
        .iter()
        .map(|o| o.rating * env.similarity(item, o.item).exp())
        .sum()
}

fn scores_for_user(env: &DirichletEnv, history: &InteractionHistory, user: usize) -> Vec<f64> {
    let items = env.config.items;
    let mut scores = vec![0.0; items];
    for o in history.user_observations(user) {
        let r = o.rating;
        for (i, s) in scores.iter_mut().enumerate() {
            *s += r * env.similarity(i, o.item).exp();
        }
    }
    scores
}

/// Exposure distribution over items for `user` at step `history.horizon() + 1`.
///
/// Consumed items get weight 0; the `top_k` highest-scoring unconsumed items
/// (ties broken by ascending index) get the boost weight; everything else 1.
/// An empty history yields the uniform distribution over unconsumed items.
pub fn exposure_probs_pan(env: &DirichletEnv, history: &InteractionHistory, user: usize) -> Result<Vec<f64>> {
    let items = env.config.items;
    if user >= env.config.users {
        return Err(Error::IndexOutOfRange { user, item: 0 });
    }
    let open: Vec<usize> = (0..items).filter(|&i| !history.is_consumed(user, i)).collect();
    if open.is_empty() {
        return Err(Error::UserExhausted(user));
    }
    let mut weights = vec![0.0; items];
    if history.horizon() == 0 {
        for &i in &open {
            weights[i] = 1.0;
        }
    } else {
        let scores = scores_for_user(env, history, user);
        let mut ranked = open.clone();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let top_k = env.config.effective_top_k();
        for (rank, &i) in ranked.iter().enumerate() {
            weights[i] = if rank < top_k { env.config.boost } else { 1.0 };
        }
    }
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{HistoryConfig, PropensityLog, RatingMatrix, RecommendationMatrix, StepQuota};

    fn small_env(items: usize, top_k: usize) -> DirichletEnv {
        DirichletEnv::new(
            DirichletEnvConfig {
                users: 3,
                items,
                dim: 4,
                top_k: Some(top_k),
                ..Default::default()
            },
            &mut SeededRng::new(11, 1),
        )
        .unwrap()
    }

    fn history(users: usize, items: usize) -> InteractionHistory {
        InteractionHistory::new(HistoryConfig {
            users,
            items,
            quota: StepQuota::PerUser(1),
            no_repeat: true,
            seed: 0,
        })
        .unwrap()
    }

    fn add_step(h: InteractionHistory, picks: &[(usize, f64)]) -> InteractionHistory {
        let (users, items, t) = (h.users(), h.items(), h.horizon() + 1);
        let mut a = RecommendationMatrix::new(users, items, t).unwrap();
        let mut r = RatingMatrix::new(users, items, t).unwrap();
        let mut p = PropensityLog::new(t);
        for (u, &(i, rating)) in picks.iter().enumerate() {
            a.set(u, i).unwrap();
            r.set(u, i, rating).unwrap();
            p.push(u, i, 0.1);
        }
        h.record_step(&a, &r, p, None).unwrap()
    }

    #[test]
    fn vectors_live_on_the_simplex() {
        let env = small_env(20, 2);
        for u in 0..3 {
            let s: f64 = env.user(u).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(env.user(u).iter().all(|x| *x >= 0.0));
        }
        for i in 0..20 {
            let s: f64 = env.item(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for i in 0..20 {
            for j in 0..20 {
                let s = env.similarity(i, j);
                assert!(s > 0.0 && s < 1.0);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        assert_eq!(small_env(20, 2).checksum(), small_env(20, 2).checksum());
    }

    #[test]
    fn empty_history_scores_zero() {
        let env = small_env(10, 2);
        let h = history(3, 10);
        for i in 0..10 {
            assert_eq!(score_pan(&env, &h, 0, i), 0.0);
        }
    }

    #[test]
    fn single_interaction_score() {
        let env = small_env(10, 2);
        let h = add_step(history(3, 10), &[(4, 0.6), (0, 0.5), (1, 0.5)]);
        for i in 0..10 {
            let expected = 0.6 * env.similarity(i, 4).exp();
            assert!((score_pan(&env, &h, 0, i) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn scores_are_linear_in_past_ratings() {
        let env = small_env(10, 2);
        let h1 = add_step(add_step(history(3, 10), &[(4, 0.3), (0, 0.2), (1, 0.2)]), &[(2, 0.1), (3, 0.2), (4, 0.2)]);
        let h2 = add_step(add_step(history(3, 10), &[(4, 0.6), (0, 0.4), (1, 0.4)]), &[(2, 0.2), (3, 0.4), (4, 0.4)]);
        for i in 0..10 {
            let (a, b) = (score_pan(&env, &h1, 0, i), score_pan(&env, &h2, 0, i));
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn consumed_items_get_zero_and_output_is_a_distribution() {
        let env = small_env(10, 2);
        let h = add_step(history(3, 10), &[(9, 0.5), (9, 0.5), (9, 0.5)]);
        let p = exposure_probs_pan(&env, &h, 0).unwrap();
        assert_eq!(p[9], 0.0);
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(p.iter().filter(|x| **x > 0.0).count(), 9);
    }

    #[test]
    fn flat_scores_give_ten_over_twenty_eight() {
        // all items unconsumed and all scores equal: an empty per-user history
        // within a non-empty global history
        let env = DirichletEnv::new(
            DirichletEnvConfig {
                users: 2,
                items: 10,
                dim: 3,
                top_k: Some(2),
                ..Default::default()
            },
            &mut SeededRng::new(3, 1),
        )
        .unwrap();
        let h = InteractionHistory::new(HistoryConfig {
            users: 2,
            items: 10,
            quota: StepQuota::Total(1),
            no_repeat: true,
            seed: 0,
        })
        .unwrap();
        let mut a = RecommendationMatrix::new(2, 10, 1).unwrap();
        a.set(1, 0).unwrap();
        let mut r = RatingMatrix::new(2, 10, 1).unwrap();
        r.set(1, 0, 0.5).unwrap();
        let mut p = PropensityLog::new(1);
        p.push(1, 0, 0.05);
        let h = h.record_step(&a, &r, p, None).unwrap();
        let probs = exposure_probs_pan(&env, &h, 0).unwrap();
        assert!((probs[0] - 10.0 / 28.0).abs() < 1e-15);
        assert!((probs[1] - 10.0 / 28.0).abs() < 1e-15);
        for p in &probs[2..] {
            assert!((p - 1.0 / 28.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exhausted_user_errors() {
        let env = small_env(2, 1);
        let h = add_step(add_step(history(3, 2), &[(0, 0.5), (0, 0.5), (0, 0.5)]), &[(1, 0.5), (1, 0.5), (1, 0.5)]);
        assert!(matches!(exposure_probs_pan(&env, &h, 0), Err(Error::UserExhausted(0))));
    }

    #[test]
    fn sample_mean_matches_affinity() {
        let env = small_env(10, 2);
        // pick a pair whose mean is interior so clamping is inactive
        let (u, i) = (0..3)
            .flat_map(|u| (0..10).map(move |i| (u, i)))
            .find(|&(u, i)| {
                let m = env.affinity(u, i);
                m > env.mean_bounds().0 && m < env.mean_bounds().1
            })
            .expect("some interior pair");
        let mu = env.affinity(u, i);
        let mut rng = SeededRng::new(21, 9);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| env.sample_rating(u, i, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se, "mean {mean} vs {mu} (se {se})");
        assert!(draws.iter().all(|x| *x > 0.0 && *x < 1.0));
    }

    #[test]
    fn cloned_rng_reproduces_draw() {
        let env = small_env(10, 2);
        let rng = SeededRng::new(8, 2);
        let a = env.sample_rating(1, 3, &mut rng.clone()).unwrap();
        let b = env.sample_rating(1, 3, &mut rng.clone()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn unclamped_sampling_propagates_parameter_errors() {
        let env = small_env(10, 2);
        let tiny = (0..3)
            .flat_map(|u| (0..10).map(move |i| (u, i)))
            .find(|&(u, i)| env.affinity(u, i) * (1.0 - env.affinity(u, i)) <= 0.01);
        if let Some((u, i)) = tiny {
            assert!(env.sample_rating_unclamped(u, i, &mut SeededRng::new(1, 1)).is_err());
            assert!(env.sample_rating(u, i, &mut SeededRng::new(1, 1)).is_ok());
        }
    }
}
