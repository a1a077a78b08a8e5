//! Recommendation policies with exact propensities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::{exposure_probs_pan, DirichletEnv};
use crate::error::{Error, Result};
use crate::history::{InteractionHistory, LatentParams, PairSet, PropensityLog, RecommendationMatrix};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PolicyKind {
    UniformRandom,
    /// `1 − ε` spread over the top-N predicted items, `ε` over all feasible items.
    TopnEpsilon { epsilon: f64 },
    /// `∝ exp(prediction / τ)`
    Softmax { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    #[serde(flatten)]
    pub kind: PolicyKind,
    /// Items recommended per user per step.
    pub n: usize,
    pub no_repeat: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::TopnEpsilon { epsilon: 0.1 },
            n: 1,
            no_repeat: true,
        }
    }
}

/// Anything that can put a distribution over one user's items.
pub trait RecommendationPolicy {
    /// Items per user per step.
    fn n(&self) -> usize;

    /// Distribution over all items for `user`; infeasible items get exactly 0.
    fn item_probs(&self, history: &InteractionHistory, user: usize) -> Result<Vec<f64>>;
}

fn feasible(
    history: &InteractionHistory,
    user: usize,
    no_repeat: bool,
    excluded: Option<&PairSet>,
) -> Vec<usize> {
    (0..history.items())
        .filter(|&i| !(no_repeat && history.is_consumed(user, i)))
        .filter(|&i| !excluded.is_some_and(|x| x.contains(user, i)))
        .collect()
}

/// The policy's distribution over items for `user`.
///
/// Feasible items are those not in `excluded` and, under `no_repeat`, not
/// yet recommended to the user. `params` is needed by the model-driven kinds.
pub fn policy_probs(
    policy: &PolicyConfig,
    params: Option<&LatentParams>,
    history: &InteractionHistory,
    user: usize,
    excluded: Option<&PairSet>,
) -> Result<Vec<f64>> {
    if user >= history.users() {
        return Err(Error::IndexOutOfRange { user, item: 0 });
    }
    let items = history.items();
    let open = feasible(history, user, policy.no_repeat, excluded);
    if open.is_empty() {
        return Err(Error::UserExhausted(user));
    }
    let m = open.len() as f64;
    let mut probs = vec![0.0; items];
    let need_params = || {
        params.ok_or_else(|| Error::InvalidParameter("model-driven policy needs fitted parameters".into()))
    };
    match policy.kind {
        PolicyKind::UniformRandom => {
            for &i in &open {
                probs[i] = 1.0 / m;
            }
        }
        PolicyKind::TopnEpsilon { epsilon } => {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside [0, 1]")));
            }
            let p = need_params()?;
            let mut ranked = open.clone();
            ranked.sort_by(|&a, &b| p.predict(user, b).total_cmp(&p.predict(user, a)).then(a.cmp(&b)));
            let top = policy.n.max(1).min(ranked.len());
            for &i in &open {
                probs[i] = epsilon / m;
            }
            for &i in &ranked[..top] {
                probs[i] += (1.0 - epsilon) / top as f64;
            }
        }
        PolicyKind::Softmax { temperature } => {
            if !(temperature > 0.0) {
                return Err(Error::InvalidParameter("temperature must be positive".into()));
            }
            let p = need_params()?;
            let max = open
                .iter()
                .map(|&i| p.predict(user, i))
                .fold(f64::NEG_INFINITY, f64::max);
            for &i in &open {
                probs[i] = ((p.predict(user, i) - max) / temperature).exp();
            }
            let z: f64 = probs.iter().sum();
            for x in &mut probs {
                *x /= z;
            }
        }
    }
    Ok(probs)
}

/// A [`PolicyConfig`] bound to fitted parameters and a set of pairs that may
/// never be recommended.
#[derive(Debug, Clone, Copy)]
pub struct ModelPolicy<'a> {
    pub config: PolicyConfig,
    pub params: Option<&'a LatentParams>,
    pub excluded: Option<&'a PairSet>,
}

impl RecommendationPolicy for ModelPolicy<'_> {
    fn n(&self) -> usize {
        self.config.n
    }

    fn item_probs(&self, history: &InteractionHistory, user: usize) -> Result<Vec<f64>> {
        policy_probs(&self.config, self.params, history, user, self.excluded)
    }
}

/// Similarity-driven exposure of the simplex world; ignores any model.
#[derive(Debug, Clone, Copy)]
pub struct PanExposurePolicy<'a> {
    pub env: &'a DirichletEnv,
    pub n: usize,
}

impl RecommendationPolicy for PanExposurePolicy<'_> {
    fn n(&self) -> usize {
        self.n
    }

    fn item_probs(&self, history: &InteractionHistory, user: usize) -> Result<Vec<f64>> {
        exposure_probs_pan(self.env, history, user)
    }
}

/// Enumeration budget for exact inclusion probabilities when `N > 1`.
const INCLUSION_WORK_LIMIT: u64 = 5_000_000;

/// Probability that each item is among `n` draws without replacement, each
/// draw proportional to `probs` over the items not yet drawn.
pub fn inclusion_probabilities(probs: &[f64], n: usize) -> Result<Vec<f64>> {
    let support: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    if n > support.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {n} items from {} with positive probability",
            support.len()
        )));
    }
    if n == 1 {
        return Ok(probs.to_vec());
    }
    let m = support.len() as u64;
    let work = (0..n as u64).try_fold(1u64, |acc, j| acc.checked_mul(m - j));
    if !work.is_some_and(|w| w <= INCLUSION_WORK_LIMIT) {
        return Err(Error::Intractable(format!(
            "{n} draws from {m} items exceed the enumeration budget"
        )));
    }
    let mut out = vec![0.0; probs.len()];
    let mut taken = vec![false; probs.len()];
    fn walk(
        probs: &[f64],
        support: &[usize],
        taken: &mut [bool],
        remaining_mass: f64,
        depth: usize,
        path_prob: f64,
        out: &mut [f64],
    ) {
        if depth == 0 {
            return;
        }
        for &i in support {
            if taken[i] {
                continue;
            }
            let p = path_prob * probs[i] / remaining_mass;
            out[i] += p;
            taken[i] = true;
            walk(probs, support, taken, remaining_mass - probs[i], depth - 1, p, out);
            taken[i] = false;
        }
    }
    let total: f64 = support.iter().map(|&i| probs[i]).sum();
    walk(probs, &support, &mut taken, total, n, 1.0, &mut out);
    Ok(out)
}

fn draw(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if x < w {
                return i;
            }
            x -= w;
            last = i;
        }
    }
    last
}

/// Sample `N` items per user without replacement from the policy and log the
/// marginal inclusion probability of each chosen item as its propensity.
///
/// With `log_table` the full `U x I` inclusion table is attached to the log.
pub fn recommend(
    policy: &dyn RecommendationPolicy,
    history: &InteractionHistory,
    rng: &mut SeededRng,
    log_table: bool,
) -> Result<(RecommendationMatrix, PropensityLog)> {
    let (users, items) = (history.users(), history.items());
    let t = history.horizon() + 1;
    let n = policy.n();
    let mut rec = RecommendationMatrix::new(users, items, t)?;
    let mut log = PropensityLog::new(t);
    let mut table = if log_table { Vec::with_capacity(users * items) } else { Vec::new() };
    for u in 0..users {
        let probs = policy.item_probs(history, u)?;
        let positive = probs.iter().filter(|p| **p > 0.0).count();
        if positive < n {
            return Err(Error::UserExhausted(u));
        }
        let incl = inclusion_probabilities(&probs, n)?;
        let mut remaining = probs.clone();
        let mut chosen = Vec::with_capacity(n);
        for _ in 0..n {
            let i = draw(&remaining, rng);
            remaining[i] = 0.0;
            chosen.push(i);
        }
        chosen.sort_unstable();
        for i in chosen {
            rec.set(u, i)?;
            log.push(u, i, incl[i]);
        }
        if log_table {
            table.extend_from_slice(&incl);
        }
    }
    if log_table {
        log = log.with_table(table);
    }
    Ok((rec, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{HistoryConfig, RatingMatrix, StepQuota};
    use rand::Rng;
    use proptest::prelude::*;

    fn history(users: usize, items: usize, consumed: &[(usize, usize)]) -> InteractionHistory {
        let h = InteractionHistory::new(HistoryConfig {
            users,
            items,
            quota: StepQuota::Total(consumed.len().max(1)),
            no_repeat: true,
            seed: 0,
        })
        .unwrap();
        if consumed.is_empty() {
            return h;
        }
        let rec = RecommendationMatrix::from_pairs(users, items, 1, consumed.iter().copied()).unwrap();
        let mut r = RatingMatrix::new(users, items, 1).unwrap();
        let mut p = PropensityLog::new(1);
        for &(u, i) in consumed {
            r.set(u, i, 3.0).unwrap();
            p.push(u, i, 0.5);
        }
        h.record_step(&rec, &r, p, None).unwrap()
    }

    fn params(users: usize, scores: &[f64]) -> LatentParams {
        LatentParams::new(1, vec![1.0; users], scores.to_vec(), 1.0).unwrap()
    }

    #[test]
    fn uniform_over_seven_feasible() {
        let h = history(1, 9, &[(0, 2), (0, 5)]);
        let cfg = PolicyConfig { kind: PolicyKind::UniformRandom, ..Default::default() };
        let p = policy_probs(&cfg, None, &h, 0, None).unwrap();
        for (i, x) in p.iter().enumerate() {
            if i == 2 || i == 5 {
                assert_eq!(*x, 0.0);
            } else {
                assert!((x - 1.0 / 7.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let h = history(1, 4, &[]);
        let theta = params(1, &[1.0, 3.0, 3.0, 2.0]);
        let cfg = PolicyConfig { kind: PolicyKind::TopnEpsilon { epsilon: 0.0 }, ..Default::default() };
        assert_eq!(policy_probs(&cfg, Some(&theta), &h, 0, None).unwrap(), vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn topn_epsilon_mass_split() {
        let h = history(1, 5, &[(0, 4)]);
        let theta = params(1, &[1.0, 2.0, 3.0, 0.0, 9.0]);
        let cfg = PolicyConfig { kind: PolicyKind::TopnEpsilon { epsilon: 0.2 }, n: 2, no_repeat: true };
        let p = policy_probs(&cfg, Some(&theta), &h, 0, None).unwrap();
        let expect = [0.05, 0.05 + 0.4, 0.05 + 0.4, 0.05, 0.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn hot_softmax_is_uniform() {
        let h = history(1, 6, &[]);
        let theta = params(1, &[0.0, 1.0, 5.0, -3.0, 2.0, 4.0]);
        let cfg = PolicyConfig { kind: PolicyKind::Softmax { temperature: 1e9 }, ..Default::default() };
        let p = policy_probs(&cfg, Some(&theta), &h, 0, None).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 6.0).abs() < 1e-6));
    }

    #[test]
    fn exhausted_user() {
        let h = history(1, 2, &[(0, 0), (0, 1)]);
        let cfg = PolicyConfig { kind: PolicyKind::UniformRandom, ..Default::default() };
        assert_eq!(policy_probs(&cfg, None, &h, 0, None), Err(Error::UserExhausted(0)));
    }

    #[test]
    fn excluded_pairs_get_zero() {
        let h = history(2, 3, &[]);
        let mut ex = PairSet::new(2, 3);
        ex.insert(1, 1).unwrap();
        let cfg = PolicyConfig { kind: PolicyKind::UniformRandom, ..Default::default() };
        let p = policy_probs(&cfg, None, &h, 1, Some(&ex)).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_draw_logs_policy_probability() {
        let h = history(3, 5, &[(0, 1), (2, 4)]);
        let theta = LatentParams::new(1, vec![1.0, -1.0, 0.5], vec![0.3, 0.1, 0.9, 0.2, 0.4], 1.0).unwrap();
        let cfg = PolicyConfig { kind: PolicyKind::Softmax { temperature: 0.5 }, ..Default::default() };
        let policy = ModelPolicy { config: cfg, params: Some(&theta), excluded: None };
        let (rec, log) = recommend(&policy, &h, &mut SeededRng::new(3, 5), false).unwrap();
        for r in log.records() {
            let p = policy_probs(&cfg, Some(&theta), &h, r.user, None).unwrap();
            assert_eq!(r.propensity, p[r.item]);
            assert!(!h.is_consumed(r.user, r.item));
        }
        assert_eq!(rec.count(), 3);
        let again = recommend(&policy, &h, &mut SeededRng::new(3, 5), false).unwrap();
        assert_eq!(again.0, rec);
    }

    #[test]
    fn two_draw_inclusion_by_hand() {
        let p = [0.5, 0.3, 0.2];
        let incl = inclusion_probabilities(&p, 2).unwrap();
        // π_0 = 0.5 + 0.3·0.5/0.7 + 0.2·0.5/0.8
        let pi0 = 0.5 + 0.3 * 0.5 / 0.7 + 0.2 * 0.5 / 0.8;
        assert!((incl[0] - pi0).abs() < 1e-15);
        assert!((incl.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!(matches!(
            inclusion_probabilities(&vec![0.01; 100], 5),
            Err(Error::Intractable(_))
        ));
    }

    #[test]
    fn empirical_frequency_matches_propensity() {
        let h = history(1, 6, &[(0, 3)]);
        let theta = params(1, &[0.2, 0.8, -0.5, 1.0, 0.1, 0.4]);
        let cfg = PolicyConfig { kind: PolicyKind::Softmax { temperature: 0.4 }, ..Default::default() };
        let policy = ModelPolicy { config: cfg, params: Some(&theta), excluded: None };
        let p = policy_probs(&cfg, Some(&theta), &h, 0, None).unwrap();
        let mut rng = SeededRng::new(8, 1);
        let draws = 100_000;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            let (rec, _) = recommend(&policy, &h, &mut rng, false).unwrap();
            counts[rec.user_items(0).next().unwrap()] += 1;
        }
        for i in 0..6 {
            let f = counts[i] as f64 / draws as f64;
            let se = (p[i] * (1.0 - p[i]) / draws as f64).sqrt();
            assert!((f - p[i]).abs() <= 4.0 * se + 1e-12, "item {i}: {f} vs {}", p[i]);
        }
    }

    proptest! {
        #[test]
        fn probs_are_distributions(seed in 0u64..1000, tau in 0.05f64..5.0, eps in 0.0f64..1.0) {
            let mut rng = SeededRng::new(seed, 0);
            let items = rng.random_range(2..12);
            let consumed: Vec<(usize, usize)> = (0..items - 1).filter(|_| rng.random::<f64>() < 0.3).map(|i| (0, i)).collect();
            let h = history(1, items, &consumed);
            let scores: Vec<f64> = (0..items).map(|_| rng.random_range(-3.0..3.0)).collect();
            let theta = params(1, &scores);
            for kind in [PolicyKind::UniformRandom, PolicyKind::TopnEpsilon { epsilon: eps }, PolicyKind::Softmax { temperature: tau }] {
                let cfg = PolicyConfig { kind, n: 1, no_repeat: true };
                let p = policy_probs(&cfg, Some(&theta), &h, 0, None).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                for &(_, i) in &consumed {
                    prop_assert_eq!(p[i], 0.0);
                }
            }
        }
    }
}
