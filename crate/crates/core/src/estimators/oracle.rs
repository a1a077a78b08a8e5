//! Exact expectations on tiny worlds by enumerating every trajectory.
//!
//! A tiny world has `U·I ≤ 6` pairs, a rating support of at most three
//! nonzero values, and a policy that recommends exactly one pair per step.
//! The causal objective is taken under the counting measure over single-pair
//! interventions:
//!
//! `L(Θ) = Σ_{s=1..t} Σ_{(u,i)} E_{P(R | do(A_{s,ui}=1))}[log P_Θ(R_{ui})]`
//!
//! so it does not depend on the policy. `A = 0` terms are parameter-free
//! and dropped, as in the estimators.

use rand::Rng;
use rayon::prelude::*;

use super::{
    cafl_general_weights, cafl_special_weights, ipw_weights, naive_weights, CaflOptions,
    WeightAssignment,
};
use crate::error::{Error, Result};
use crate::history::{
    HistoryConfig, InteractionHistory, LatentParams, PropensityLog, RatingMatrix,
    RecommendationMatrix, StepQuota,
};
use crate::rng::SeededRng;

pub const MAX_PAIRS: usize = 6;
pub const MAX_HORIZON: usize = 3;
pub const MAX_SUPPORT: usize = 3;

/// Discrete rating law per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyWorld {
    users: usize,
    items: usize,
    support: Vec<f64>,
    // row-major pairs, each a distribution over `support`
    probs: Vec<Vec<f64>>,
}

impl TinyWorld {
    pub fn new(users: usize, items: usize, support: Vec<f64>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if users == 0 || items == 0 || support.is_empty() {
            return Err(Error::InvalidParameter("empty tiny world".into()));
        }
        if support.iter().any(|r| *r == 0.0 || !r.is_finite()) {
            return Err(Error::InvalidParameter(
                "rating support must be finite and nonzero (0 encodes no rating)".into(),
            ));
        }
        if probs.len() != users * items {
            return Err(Error::InvalidParameter(format!(
                "expected {} rating laws, got {}",
                users * items,
                probs.len()
            )));
        }
        for p in &probs {
            if p.len() != support.len() || p.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::InvalidParameter("malformed rating law".into()));
            }
            if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("rating law does not sum to 1".into()));
            }
        }
        Ok(Self {
            users,
            items,
            support,
            probs,
        })
    }

    /// Point-mass ratings.
    pub fn deterministic(users: usize, items: usize, ratings: &[f64]) -> Result<Self> {
        let mut support: Vec<f64> = Vec::new();
        for &r in ratings {
            if !support.contains(&r) {
                support.push(r);
            }
        }
        let probs = ratings
            .iter()
            .map(|r| support.iter().map(|s| if s == r { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(users, items, support, probs)
    }

    /// Random world with `values` distinct support points in `[1, 5]`.
    pub fn random(users: usize, items: usize, values: usize, rng: &mut SeededRng) -> Result<Self> {
        let mut support: Vec<f64> = (0..values)
            .map(|v| 1.0 + v as f64 + rng.random_range(0.0..0.9))
            .collect();
        support.sort_by(f64::total_cmp);
        let probs = (0..users * items)
            .map(|_| {
                let raw: Vec<f64> = (0..values).map(|_| rng.random_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                let mut p: Vec<f64> = raw.iter().map(|x| x / z).collect();
                let head: f64 = p[..values - 1].iter().sum();
                p[values - 1] = 1.0 - head;
                p
            })
            .collect();
        Self::new(users, items, support, probs)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn pairs(&self) -> usize {
        self.users * self.items
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn rating_law(&self, user: usize, item: usize) -> &[f64] {
        &self.probs[user * self.items + item]
    }

    /// `E[log P_Θ(R_{ui})]` under the true rating law of the pair.
    pub fn expected_log_likelihood(&self, params: &LatentParams, user: usize, item: usize) -> f64 {
        self.support
            .iter()
            .zip(self.rating_law(user, item))
            .filter(|(_, p)| **p > 0.0)
            .map(|(r, p)| p * params.log_likelihood(user, item, *r))
            .sum()
    }

    fn check_limits(&self, t: usize) -> Result<()> {
        if self.pairs() > MAX_PAIRS || t > MAX_HORIZON || self.support.len() > MAX_SUPPORT {
            return Err(Error::OracleLimitExceeded(format!(
                "U·I = {}, t = {}, support = {} (limits {MAX_PAIRS}, {MAX_HORIZON}, {MAX_SUPPORT})",
                self.pairs(),
                t,
                self.support.len()
            )));
        }
        Ok(())
    }
}

/// A policy choosing one pair per step with computable probabilities.
pub trait TinyPolicy: Sync {
    fn no_repeat(&self) -> bool;

    /// Row-major distribution over all `U·I` pairs given the history so far.
    fn pair_probs(&self, world: &TinyWorld, history: &InteractionHistory) -> Vec<f64>;
}

/// Uniform over unconsumed pairs.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRemaining;

impl TinyPolicy for UniformRemaining {
    fn no_repeat(&self) -> bool {
        true
    }

    fn pair_probs(&self, world: &TinyWorld, history: &InteractionHistory) -> Vec<f64> {
        let items = world.items;
        let open: Vec<bool> = (0..world.pairs())
            .map(|k| !history.is_consumed(k / items, k % items))
            .collect();
        let n = open.iter().filter(|x| **x).count() as f64;
        open.iter().map(|&o| if o { 1.0 / n } else { 0.0 }).collect()
    }
}

/// Uniform over all pairs at every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWithReplacement;

impl TinyPolicy for UniformWithReplacement {
    fn no_repeat(&self) -> bool {
        false
    }

    fn pair_probs(&self, world: &TinyWorld, _history: &InteractionHistory) -> Vec<f64> {
        vec![1.0 / world.pairs() as f64; world.pairs()]
    }
}

/// Softmax over `Σ_{past (j, r)} affinity[k][j] · r / τ`: past ratings pull
/// the policy towards related pairs.
#[derive(Debug, Clone)]
pub struct FeedbackSoftmax {
    /// Row-major `UI x UI`.
    pub affinity: Vec<f64>,
    pub temperature: f64,
    pub no_repeat: bool,
}

impl FeedbackSoftmax {
    pub fn random(pairs: usize, temperature: f64, no_repeat: bool, rng: &mut SeededRng) -> Self {
        Self {
            affinity: (0..pairs * pairs).map(|_| rng.random_range(-1.0..1.0)).collect(),
            temperature,
            no_repeat,
        }
    }
}

impl TinyPolicy for FeedbackSoftmax {
    fn no_repeat(&self) -> bool {
        self.no_repeat
    }

    fn pair_probs(&self, world: &TinyWorld, history: &InteractionHistory) -> Vec<f64> {
        let (n, items) = (world.pairs(), world.items);
        let scores: Vec<f64> = (0..n)
            .map(|k| {
                history
                    .observations()
                    .map(|o| self.affinity[k * n + o.user * items + o.item] * o.rating)
                    .sum::<f64>()
                    / self.temperature
            })
            .collect();
        let feasible = |k: usize| !(self.no_repeat && history.is_consumed(k / items, k % items));
        let max = (0..n)
            .filter(|&k| feasible(k))
            .map(|k| scores[k])
            .fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = (0..n)
            .map(|k| if feasible(k) { (scores[k] - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = raw.iter().sum();
        raw.iter().map(|x| x / z).collect()
    }
}

/// Weight schemes the oracle can take expectations of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Naive,
    Ipw,
    CaflSpecial(CaflOptions),
    CaflGeneral(CaflOptions),
}

impl Estimator {
    pub fn weights(&self, history: &InteractionHistory) -> Result<WeightAssignment> {
        match self {
            Estimator::Naive => Ok(naive_weights(history)),
            Estimator::Ipw => ipw_weights(history),
            Estimator::CaflSpecial(o) => cafl_special_weights(history, o),
            Estimator::CaflGeneral(o) => cafl_general_weights(history, o),
        }
    }
}

/// `L(Θ)` summed over steps `1..=t`.
pub fn exact_causal_objective(world: &TinyWorld, params: &LatentParams, t: usize) -> Result<f64> {
    world.check_limits(t)?;
    let per_step: f64 = (0..world.users)
        .flat_map(|u| (0..world.items).map(move |i| (u, i)))
        .map(|(u, i)| world.expected_log_likelihood(params, u, i))
        .sum();
    Ok((0..t).map(|_| per_step).sum())
}

fn empty_history(world: &TinyWorld, no_repeat: bool) -> Result<InteractionHistory> {
    InteractionHistory::new(HistoryConfig {
        users: world.users,
        items: world.items,
        quota: StepQuota::Total(1),
        no_repeat,
        seed: 0,
    })
}

fn extend(
    world: &TinyWorld,
    history: &InteractionHistory,
    probs: &[f64],
    pair: usize,
    rating: f64,
) -> Result<InteractionHistory> {
    let t = history.horizon() + 1;
    let (u, i) = (pair / world.items, pair % world.items);
    let rec = RecommendationMatrix::from_pairs(world.users, world.items, t, [(u, i)])?;
    let mut ratings = RatingMatrix::new(world.users, world.items, t)?;
    ratings.set(u, i, rating)?;
    let mut log = PropensityLog::new(t);
    log.push(u, i, probs[pair]);
    history
        .clone()
        .record_step(&rec, &ratings, log.with_table(probs.to_vec()), None)
}

/// `(pair, rating, probability)` for every positive-probability outcome of one step.
fn branches(world: &TinyWorld, probs: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for (k, &pk) in probs.iter().enumerate() {
        if pk == 0.0 {
            continue;
        }
        let law = world.rating_law(k / world.items, k % world.items);
        for (&r, &pr) in world.support.iter().zip(law) {
            if pr > 0.0 {
                out.push((k, r, pk * pr));
            }
        }
    }
    out
}

/// Probability-weighted sum of `leaf(history)` over all length-`t`
/// trajectories. Vectors returned by `leaf` must share one length.
fn enumerate<F>(world: &TinyWorld, policy: &dyn TinyPolicy, t: usize, leaf: &F) -> Result<Vec<f64>>
where
    F: Fn(&InteractionHistory) -> Result<Vec<f64>> + Sync,
{
    world.check_limits(t)?;
    if policy.no_repeat() && t > world.pairs() {
        return Err(Error::HorizonExhaustsCatalogue {
            horizon: t,
            catalogue: world.pairs(),
        });
    }
    let root = empty_history(world, policy.no_repeat())?;
    if t == 0 {
        return leaf(&root);
    }
    let probs = policy.pair_probs(world, &root);
    check_distribution(&probs)?;
    // Branch on the first step in parallel, then add in branch order.
    let parts = branches(world, &probs)
        .into_par_iter()
        .map(|(k, r, w)| {
            let child = extend(world, &root, &probs, k, r)?;
            let v = recurse(world, policy, t, &child, leaf)?;
            Ok(v.into_iter().map(|x| w * x).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Vec::new();
    for part in parts {
        if total.is_empty() {
            total = vec![0.0; part.len()];
        }
        for (a, b) in total.iter_mut().zip(part) {
            *a += b;
        }
    }
    Ok(total)
}

fn recurse<F>(
    world: &TinyWorld,
    policy: &dyn TinyPolicy,
    t: usize,
    history: &InteractionHistory,
    leaf: &F,
) -> Result<Vec<f64>>
where
    F: Fn(&InteractionHistory) -> Result<Vec<f64>>,
{
    if history.horizon() == t {
        return leaf(history);
    }
    let probs = policy.pair_probs(world, history);
    check_distribution(&probs)?;
    let mut total: Vec<f64> = Vec::new();
    for (k, r, w) in branches(world, &probs) {
        let child = extend(world, history, &probs, k, r)?;
        let v = recurse(world, policy, t, &child, leaf)?;
        if total.is_empty() {
            total = vec![0.0; v.len()];
        }
        for (a, b) in total.iter_mut().zip(v) {
            *a += w * b;
        }
    }
    Ok(total)
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    let z: f64 = probs.iter().sum();
    if (z - 1.0).abs() > 1e-12 || probs.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "policy probabilities sum to {z}"
        )));
    }
    Ok(())
}

/// `E[Σ w_{sui} log P_Θ(R_{sui})]` over all trajectories of `policy`.
pub fn expected_estimator_value(
    estimator: Estimator,
    world: &TinyWorld,
    policy: &dyn TinyPolicy,
    params: &LatentParams,
    t: usize,
) -> Result<f64> {
    let leaf = |h: &InteractionHistory| -> Result<Vec<f64>> {
        Ok(vec![estimator.weights(h)?.objective(h, params)?])
    };
    Ok(enumerate(world, policy, t, &leaf)?.first().copied().unwrap_or(0.0))
}

/// `E[w_{s,k} · 𝟙{A_{s,k} = 1}]` for every step `s` and pair `k`, row-major
/// `t x UI`.
pub fn expected_weights(
    estimator: Estimator,
    world: &TinyWorld,
    policy: &dyn TinyPolicy,
    t: usize,
) -> Result<Vec<f64>> {
    let n = world.pairs();
    let items = world.items;
    let leaf = |h: &InteractionHistory| -> Result<Vec<f64>> {
        let mut out = vec![0.0; t * n];
        for e in estimator.weights(h)?.entries() {
            out[(e.step - 1) * n + e.user * items + e.item] += e.weight;
        }
        Ok(out)
    };
    enumerate(world, policy, t, &leaf)
}
