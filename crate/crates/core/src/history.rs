//! Recommendation and rating matrices, propensity logs, and the
//! append-only interaction history every estimator reads from.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_index(users: usize, items: usize, user: usize, item: usize) -> Result<()> {
    if user >= users || item >= items {
        return Err(Error::IndexOutOfRange { user, item });
    }
    Ok(())
}

fn check_timestep(timestep: usize) -> Result<()> {
    if timestep == 0 {
        return Err(Error::InvalidParameter("timesteps start at 1".into()));
    }
    Ok(())
}

/// Dense boolean mask over user-item pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSet {
    users: usize,
    items: usize,
    bits: Vec<bool>,
}

impl PairSet {
    pub fn new(users: usize, items: usize) -> Self {
        Self {
            users,
            items,
            bits: vec![false; users * items],
        }
    }

    pub fn insert(&mut self, user: usize, item: usize) -> Result<bool> {
        check_index(self.users, self.items, user, item)?;
        let slot = &mut self.bits[user * self.items + item];
        let fresh = !*slot;
        *slot = true;
        Ok(fresh)
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        user < self.users && item < self.items && self.bits[user * self.items + item]
    }

    pub fn len(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }
}

/// Binary `U x I` matrix of the recommendations made at one timestep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecommendationMatrix {
    users: usize,
    items: usize,
    timestep: usize,
    entries: Vec<bool>,
}

impl RecommendationMatrix {
    pub fn new(users: usize, items: usize, timestep: usize) -> Result<Self> {
        check_timestep(timestep)?;
        Ok(Self {
            users,
            items,
            timestep,
            entries: vec![false; users * items],
        })
    }

    pub fn from_pairs(
        users: usize,
        items: usize,
        timestep: usize,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut rec = Self::new(users, items, timestep)?;
        for (u, i) in pairs {
            rec.set(u, i)?;
        }
        Ok(rec)
    }

    pub fn set(&mut self, user: usize, item: usize) -> Result<()> {
        check_index(self.users, self.items, user, item)?;
        self.entries[user * self.items + item] = true;
        Ok(())
    }

    pub fn get(&self, user: usize, item: usize) -> bool {
        self.entries[user * self.items + item]
    }

    /// Recommended pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let items = self.items;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(move |(idx, _)| (idx / items, idx % items))
    }

    pub fn user_items(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.entries[user * self.items..(user + 1) * self.items];
        row.iter()
            .enumerate()
            .filter(|(_, a)| **a)
            .map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.entries.iter().filter(|a| **a).count()
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }
}

/// Real `U x I` rating matrix. Zero means "not observed".
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    users: usize,
    items: usize,
    timestep: usize,
    entries: Vec<f64>,
}

impl RatingMatrix {
    pub fn new(users: usize, items: usize, timestep: usize) -> Result<Self> {
        check_timestep(timestep)?;
        Ok(Self {
            users,
            items,
            timestep,
            entries: vec![0.0; users * items],
        })
    }

    pub fn set(&mut self, user: usize, item: usize, rating: f64) -> Result<()> {
        check_index(self.users, self.items, user, item)?;
        if !rating.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite rating {rating}")));
        }
        self.entries[user * self.items + item] = rating;
        Ok(())
    }

    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.entries[user * self.items + item]
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let items = self.items;
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, r)| **r != 0.0)
            .map(move |(idx, r)| (idx / items, idx % items, *r))
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }
}

/// User vectors (`U x K`) and item vectors (`I x K`), row-major, plus the
/// Gaussian noise variance of the rating model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentParams {
    users: usize,
    items: usize,
    dim: usize,
    user_vectors: Vec<f64>,
    item_vectors: Vec<f64>,
    noise_variance: f64,
}

impl LatentParams {
    pub fn new(
        dim: usize,
        user_vectors: Vec<f64>,
        item_vectors: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("latent dimension must be >= 1".into()));
        }
        if user_vectors.len() % dim != 0 || item_vectors.len() % dim != 0 {
            return Err(Error::InvalidParameter(
                "vector buffers are not a multiple of the latent dimension".into(),
            ));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        if user_vectors.iter().chain(&item_vectors).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("latent vectors must be finite".into()));
        }
        Ok(Self {
            users: user_vectors.len() / dim,
            items: item_vectors.len() / dim,
            dim,
            user_vectors,
            item_vectors,
            noise_variance,
        })
    }

    pub fn zeros(users: usize, items: usize, dim: usize, noise_variance: f64) -> Result<Self> {
        Self::new(
            dim,
            vec![0.0; users * dim],
            vec![0.0; items * dim],
            noise_variance,
        )
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_vectors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_vectors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_vectors(&self) -> &[f64] {
        &self.user_vectors
    }

    pub fn item_vectors(&self) -> &[f64] {
        &self.item_vectors
    }

    pub(crate) fn buffers_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.user_vectors, &mut self.item_vectors)
    }

    /// `θ_u · β_i`
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        self.user(u).iter().zip(self.item(i)).map(|(a, b)| a * b).sum()
    }

    /// Gaussian log-density of `rating` under `N(θ_u · β_i, σ²)`.
    pub fn log_likelihood(&self, u: usize, i: usize, rating: f64) -> f64 {
        let resid = rating - self.predict(u, i);
        -0.5 * (2.0 * std::f64::consts::PI * self.noise_variance).ln()
            - resid * resid / (2.0 * self.noise_variance)
    }

    /// Order-sensitive FNV-1a checksum over the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.user_vectors.iter().chain(&self.item_vectors) {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityRecord {
    pub step: usize,
    pub user: usize,
    pub item: usize,
    pub propensity: f64,
}

/// Probabilities with which the deployed policy made each recommendation at
/// one step, plus the full per-pair table when the policy exposes it.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityLog {
    timestep: usize,
    records: Vec<PropensityRecord>,
    table: Option<Vec<f64>>,
}

impl PropensityLog {
    pub fn new(timestep: usize) -> Self {
        Self {
            timestep,
            records: Vec::new(),
            table: None,
        }
    }

    pub fn push(&mut self, user: usize, item: usize, propensity: f64) {
        self.records.push(PropensityRecord {
            step: self.timestep,
            user,
            item,
            propensity,
        });
    }

    /// Attach the full row-major `U x I` table of `P(A_{s,ui} = 1 | Θ̂_{s-1})`.
    pub fn with_table(mut self, table: Vec<f64>) -> Self {
        self.table = Some(table);
        self
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    pub fn records(&self) -> &[PropensityRecord] {
        &self.records
    }

    pub fn table(&self) -> Option<&[f64]> {
        self.table.as_deref()
    }

    pub fn propensity(&self, user: usize, item: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.user == user && r.item == item)
            .map(|r| r.propensity)
    }
}

/// How many recommendations a step must contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepQuota {
    /// Exactly `n` items for every user at every step.
    PerUser(usize),
    /// Exactly `n` user-item pairs in total at every step.
    Total(usize),
}

impl StepQuota {
    pub fn n(&self) -> usize {
        match self {
            StepQuota::PerUser(n) | StepQuota::Total(n) => *n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryConfig {
    pub users: usize,
    pub items: usize,
    pub quota: StepQuota,
    pub no_repeat: bool,
    pub seed: u64,
}

/// One observed (recommended and rated) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub step: usize,
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub propensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryStep {
    timestep: usize,
    observations: Vec<Observation>,
    table: Option<Vec<f64>>,
    params: Option<LatentParams>,
}

impl HistoryStep {
    pub fn timestep(&self) -> usize {
        self.timestep
    }

    /// Observations in row-major `(user, item)` order.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn propensity_table(&self) -> Option<&[f64]> {
        self.table.as_deref()
    }

    pub fn params(&self) -> Option<&LatentParams> {
        self.params.as_ref()
    }
}

/// The full trajectory `{(A_s, R_s, propensities, Θ̂_s)}` for `s = 1..t`,
/// stored as triplets. [`InteractionHistory::record_step`] is the only way
/// to extend it.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionHistory {
    config: HistoryConfig,
    steps: Vec<HistoryStep>,
    // first step at which each pair was recommended, 0 if never
    first_step: Vec<u32>,
    by_user: Vec<Vec<Observation>>,
}

impl InteractionHistory {
    pub fn new(config: HistoryConfig) -> Result<Self> {
        if config.users == 0 || config.items == 0 {
            return Err(Error::InvalidParameter("history needs U, I >= 1".into()));
        }
        if config.quota.n() == 0 {
            return Err(Error::InvalidParameter("step quota must be >= 1".into()));
        }
        Ok(Self {
            config,
            steps: Vec::new(),
            first_step: vec![0; config.users * config.items],
            by_user: vec![Vec::new(); config.users],
        })
    }

    pub fn config(&self) -> &HistoryConfig {
        &self.config
    }

    pub fn users(&self) -> usize {
        self.config.users
    }

    pub fn items(&self) -> usize {
        self.config.items
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn no_repeat(&self) -> bool {
        self.config.no_repeat
    }

    pub fn steps(&self) -> &[HistoryStep] {
        &self.steps
    }

    pub fn step(&self, timestep: usize) -> Option<&HistoryStep> {
        timestep.checked_sub(1).and_then(|s| self.steps.get(s))
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> + '_ {
        self.steps.iter().flat_map(|s| s.observations.iter())
    }

    pub fn num_observations(&self) -> usize {
        self.steps.iter().map(|s| s.observations.len()).sum()
    }

    /// Observations of one user in chronological order.
    pub fn user_observations(&self, user: usize) -> &[Observation] {
        &self.by_user[user]
    }

    /// Step at which `(user, item)` was first recommended.
    pub fn first_recommended(&self, user: usize, item: usize) -> Option<usize> {
        match self.first_step[user * self.config.items + item] {
            0 => None,
            s => Some(s as usize),
        }
    }

    pub fn is_consumed(&self, user: usize, item: usize) -> bool {
        self.first_step[user * self.config.items + item] != 0
    }

    /// Items still recommendable to `user`: unconsumed when the history is
    /// no-repeat, and never in `excluded`.
    pub fn feasible_items(&self, user: usize, excluded: Option<&PairSet>) -> Vec<usize> {
        (0..self.config.items)
            .filter(|&i| !(self.config.no_repeat && self.is_consumed(user, i)))
            .filter(|&i| !excluded.is_some_and(|x| x.contains(user, i)))
            .collect()
    }

    /// Latest fitted parameters, if any step carried them.
    pub fn latest_params(&self) -> Option<&LatentParams> {
        self.steps.iter().rev().find_map(|s| s.params.as_ref())
    }

    /// Extend the history by one step after checking every invariant.
    pub fn record_step(
        mut self,
        rec: &RecommendationMatrix,
        ratings: &RatingMatrix,
        props: PropensityLog,
        params: Option<LatentParams>,
    ) -> Result<Self> {
        let (users, items) = (self.config.users, self.config.items);
        let expected = self.horizon() + 1;
        for (u, i) in [
            (rec.users(), rec.items()),
            (ratings.users(), ratings.items()),
        ] {
            if u != users || i != items {
                return Err(Error::DimensionMismatch {
                    expected_users: users,
                    expected_items: items,
                    users: u,
                    items: i,
                });
            }
        }
        for got in [rec.timestep(), ratings.timestep(), props.timestep()] {
            if got != expected {
                return Err(Error::TimestepGap { expected, got });
            }
        }
        if let Some(p) = &params {
            if p.users() != users || p.items() != items {
                return Err(Error::DimensionMismatch {
                    expected_users: users,
                    expected_items: items,
                    users: p.users(),
                    items: p.items(),
                });
            }
        }
        if let Some(table) = props.table() {
            if table.len() != users * items {
                return Err(Error::PropensityLog {
                    step: expected,
                    reason: format!("table has {} entries, expected {}", table.len(), users * items),
                });
            }
        }

        match self.config.quota {
            StepQuota::PerUser(n) => {
                for u in 0..users {
                    let got = rec.user_items(u).count();
                    if got != n {
                        return Err(Error::QuotaViolation {
                            step: expected,
                            expected: n,
                            got,
                            scope: "per user",
                        });
                    }
                }
            }
            StepQuota::Total(n) => {
                let got = rec.count();
                if got != n {
                    return Err(Error::QuotaViolation {
                        step: expected,
                        expected: n,
                        got,
                        scope: "total",
                    });
                }
            }
        }

        for (u, i, _) in ratings.nonzero() {
            if !rec.get(u, i) {
                return Err(Error::RatingWithoutRecommendation {
                    step: expected,
                    user: u,
                    item: i,
                });
            }
        }

        if props.records().len() != rec.count() {
            return Err(Error::PropensityLog {
                step: expected,
                reason: format!(
                    "{} propensity records for {} recommendations",
                    props.records().len(),
                    rec.count()
                ),
            });
        }

        let mut observations = Vec::with_capacity(rec.count());
        for (u, i) in rec.pairs() {
            let rating = ratings.get(u, i);
            if rating == 0.0 {
                return Err(Error::MissingRating {
                    step: expected,
                    user: u,
                    item: i,
                });
            }
            let propensity = props.propensity(u, i).ok_or_else(|| Error::PropensityLog {
                step: expected,
                reason: format!("no propensity for recommended pair ({u}, {i})"),
            })?;
            if !(propensity > 0.0 && propensity <= 1.0 + 1e-12) {
                return Err(Error::PropensityLog {
                    step: expected,
                    reason: format!("realized recommendation ({u}, {i}) logged propensity {propensity}"),
                });
            }
            if self.config.no_repeat {
                if let Some(first) = self.first_recommended(u, i) {
                    return Err(Error::RepeatRecommendation {
                        step: expected,
                        user: u,
                        item: i,
                        first,
                    });
                }
            }
            observations.push(Observation {
                step: expected,
                user: u,
                item: i,
                rating,
                propensity,
            });
        }

        for obs in &observations {
            let slot = &mut self.first_step[obs.user * items + obs.item];
            if *slot == 0 {
                *slot = expected as u32;
            }
            self.by_user[obs.user].push(*obs);
        }
        let table = props.table;
        self.steps.push(HistoryStep {
            timestep: expected,
            observations,
            table,
            params,
        });
        Ok(self)
    }

    /// Prefix of this history up to and including `horizon`.
    pub fn truncated(&self, horizon: usize) -> Self {
        let keep = horizon.min(self.horizon());
        let mut out = Self {
            config: self.config,
            steps: self.steps[..keep].to_vec(),
            first_step: vec![0; self.first_step.len()],
            by_user: vec![Vec::new(); self.config.users],
        };
        for obs in out.steps.iter().flat_map(|s| s.observations.iter()) {
            let slot = &mut out.first_step[obs.user * self.config.items + obs.item];
            if *slot == 0 {
                *slot = obs.step as u32;
            }
            out.by_user[obs.user].push(*obs);
        }
        out
    }

    /// Rebuild a history from raw observations (used by the snapshot reader).
    pub(crate) fn from_observations(
        config: HistoryConfig,
        horizon: usize,
        observations: &[Observation],
    ) -> Result<Self> {
        let mut history = Self::new(config)?;
        for s in 1..=horizon {
            let mut rec = RecommendationMatrix::new(config.users, config.items, s)?;
            let mut ratings = RatingMatrix::new(config.users, config.items, s)?;
            let mut props = PropensityLog::new(s);
            for o in observations.iter().filter(|o| o.step == s) {
                rec.set(o.user, o.item)?;
                ratings.set(o.user, o.item, o.rating)?;
                props.push(o.user, o.item, o.propensity);
            }
            history = history.record_step(&rec, &ratings, props, None)?;
        }
        Ok(history)
    }
}

/// Every `(user, item, step)` with `A_{s,ui} = 1`.
pub fn consumed_pairs(history: &InteractionHistory) -> BTreeSet<(usize, usize, usize)> {
    history
        .observations()
        .map(|o| (o.user, o.item, o.step))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(no_repeat: bool) -> HistoryConfig {
        HistoryConfig {
            users: 2,
            items: 4,
            quota: StepQuota::PerUser(1),
            no_repeat,
            seed: 0,
        }
    }

    fn step(t: usize, picks: [(usize, f64); 2]) -> (RecommendationMatrix, RatingMatrix, PropensityLog) {
        let mut rec = RecommendationMatrix::new(2, 4, t).unwrap();
        let mut r = RatingMatrix::new(2, 4, t).unwrap();
        let mut p = PropensityLog::new(t);
        for (u, (i, rating)) in picks.into_iter().enumerate() {
            rec.set(u, i).unwrap();
            r.set(u, i, rating).unwrap();
            p.push(u, i, 0.25);
        }
        (rec, r, p)
    }

    #[test]
    fn base_case_has_horizon_one() {
        let h = InteractionHistory::new(config(true)).unwrap();
        let (a, r, p) = step(1, [(0, 3.0), (2, 4.0)]);
        let h = h.record_step(&a, &r, p, None).unwrap();
        assert_eq!(h.horizon(), 1);
        assert_eq!(h.num_observations(), 2);
    }

    #[test]
    fn rating_without_recommendation_rejected() {
        let h = InteractionHistory::new(config(true)).unwrap();
        let (a, mut r, p) = step(1, [(0, 3.0), (2, 4.0)]);
        r.set(0, 1, 0.7).unwrap();
        let err = h.record_step(&a, &r, p, None).unwrap_err();
        assert!(matches!(err, Error::RatingWithoutRecommendation { user: 0, item: 1, .. }));
        assert!(err.to_string().contains("rating without recommendation"));
    }

    #[test]
    fn repeat_recommendation_rejected_in_no_repeat_mode() {
        let h = InteractionHistory::new(config(true)).unwrap();
        let (a, r, p) = step(1, [(3, 3.0), (0, 4.0)]);
        let h = h.record_step(&a, &r, p, None).unwrap();
        let (a, r, p) = step(2, [(3, 2.0), (1, 4.0)]);
        let err = h.record_step(&a, &r, p, None).unwrap_err();
        assert!(matches!(err, Error::RepeatRecommendation { user: 0, item: 3, step: 2, first: 1 }));
        assert!(err.to_string().contains("repeat recommendation"));
    }

    #[test]
    fn repeats_allowed_without_no_repeat() {
        let h = InteractionHistory::new(config(false)).unwrap();
        let (a, r, p) = step(1, [(3, 3.0), (0, 4.0)]);
        let h = h.record_step(&a, &r, p, None).unwrap();
        let (a, r, p) = step(2, [(3, 2.0), (0, 4.0)]);
        let h = h.record_step(&a, &r, p, None).unwrap();
        assert_eq!(h.first_recommended(0, 3), Some(1));
        assert_eq!(consumed_pairs(&h).len(), 4);
    }

    #[test]
    fn timestep_gap_and_dimension_mismatch() {
        let h = InteractionHistory::new(config(true)).unwrap();
        let (a, r, p) = step(2, [(0, 3.0), (1, 4.0)]);
        assert!(matches!(
            h.clone().record_step(&a, &r, p, None),
            Err(Error::TimestepGap { expected: 1, got: 2 })
        ));
        let a = RecommendationMatrix::new(3, 4, 1).unwrap();
        let r = RatingMatrix::new(3, 4, 1).unwrap();
        assert!(matches!(
            h.record_step(&a, &r, PropensityLog::new(1), None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quota_and_propensity_checks() {
        let h = InteractionHistory::new(config(true)).unwrap();
        let mut a = RecommendationMatrix::new(2, 4, 1).unwrap();
        a.set(0, 0).unwrap();
        let mut r = RatingMatrix::new(2, 4, 1).unwrap();
        r.set(0, 0, 1.0).unwrap();
        let mut p = PropensityLog::new(1);
        p.push(0, 0, 0.5);
        assert!(matches!(
            h.clone().record_step(&a, &r, p, None),
            Err(Error::QuotaViolation { .. })
        ));

        let (a, r, _) = step(1, [(0, 3.0), (1, 4.0)]);
        let mut p = PropensityLog::new(1);
        p.push(0, 0, 0.5);
        p.push(1, 1, 0.0);
        assert!(matches!(
            h.record_step(&a, &r, p, None),
            Err(Error::PropensityLog { .. })
        ));
    }

    #[test]
    fn consumed_pairs_examples() {
        let h = InteractionHistory::new(HistoryConfig {
            users: 2,
            items: 3,
            quota: StepQuota::Total(1),
            no_repeat: true,
            seed: 0,
        })
        .unwrap();
        assert!(consumed_pairs(&h).is_empty());

        let mut a = RecommendationMatrix::new(2, 3, 1).unwrap();
        a.set(0, 1).unwrap();
        let mut r = RatingMatrix::new(2, 3, 1).unwrap();
        r.set(0, 1, 2.0).unwrap();
        let mut p = PropensityLog::new(1);
        p.push(0, 1, 1.0 / 6.0);
        let h = h.record_step(&a, &r, p, None).unwrap();
        assert_eq!(consumed_pairs(&h), BTreeSet::from([(0, 1, 1)]));

        let mut a = RecommendationMatrix::new(2, 3, 2).unwrap();
        a.set(1, 2).unwrap();
        let mut r = RatingMatrix::new(2, 3, 2).unwrap();
        r.set(1, 2, 2.0).unwrap();
        let mut p = PropensityLog::new(2);
        p.push(1, 2, 0.2);
        let h = h.record_step(&a, &r, p, None).unwrap();
        assert_eq!(consumed_pairs(&h).len(), 2);
    }

    #[test]
    fn truncation_replays_prefix() {
        let mut h = InteractionHistory::new(config(true)).unwrap();
        for t in 1..=3 {
            let (a, r, p) = step(t, [(t - 1, 3.0), (t, 4.0)]);
            h = h.record_step(&a, &r, p, None).unwrap();
        }
        let prefix = h.truncated(2);
        assert_eq!(prefix.horizon(), 2);
        assert!(!prefix.is_consumed(0, 2));
        assert!(h.is_consumed(0, 2));
        assert_eq!(prefix.user_observations(1).len(), 2);
    }
}
