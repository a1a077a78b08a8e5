//! Evaluation metrics and per-timestep metric series.

use std::collections::BTreeSet;

use rand::seq::index;

use crate::environments::RatingEnvironment;
use crate::error::{Error, Result};
use crate::history::{InteractionHistory, LatentParams, PairSet};
use crate::rng::SeededRng;

/// Held-out `(user, item, rating)` triples. Test pairs are never
/// recommendable; pass [`TestSet::excluded`] to the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    triples: Vec<(usize, usize, f64)>,
    excluded: PairSet,
}

impl TestSet {
    pub fn new(users: usize, items: usize, triples: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut excluded = PairSet::new(users, items);
        for &(u, i, _) in &triples {
            if !excluded.insert(u, i)? {
                return Err(Error::InvalidParameter(format!("duplicate test pair ({u}, {i})")));
            }
        }
        Ok(Self { triples, excluded })
    }

    /// `size` distinct pairs drawn uniformly, each rated once by `env`.
    pub fn sample<E: RatingEnvironment + ?Sized>(
        env: &E,
        size: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let (users, items) = (env.users(), env.items());
        if size > users * items {
            return Err(Error::InvalidParameter(format!(
                "test size {size} exceeds {} pairs",
                users * items
            )));
        }
        let mut picks = index::sample(rng, users * items, size).into_vec();
        picks.sort_unstable();
        let triples = picks
            .into_iter()
            .map(|k| Ok((k / items, k % items, env.sample_rating(k / items, k % items, rng)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(users, items, triples)
    }

    pub fn triples(&self) -> &[(usize, usize, f64)] {
        &self.triples
    }

    pub fn excluded(&self) -> &PairSet {
        &self.excluded
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// RMSE of `params` on the test triples.
    pub fn rmse(&self, params: &LatentParams) -> Result<f64> {
        let (p, t) = self.predictions(params);
        rmse(&p, &t)
    }

    pub fn mse_mae(&self, params: &LatentParams) -> Result<(f64, f64)> {
        let (p, t) = self.predictions(params);
        mse_mae(&p, &t)
    }

    fn predictions(&self, params: &LatentParams) -> (Vec<f64>, Vec<f64>) {
        self.triples
            .iter()
            .map(|&(u, i, r)| (params.predict(u, i), r))
            .unzip()
    }
}

fn check_lengths(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch(preds.len(), truths.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    Ok(mse_mae(preds, truths)?.0.sqrt())
}

pub fn mse_mae(preds: &[f64], truths: &[f64]) -> Result<(f64, f64)> {
    check_lengths(preds, truths)?;
    let n = preds.len() as f64;
    let (se, ae) = preds
        .iter()
        .zip(truths)
        .fold((0.0, 0.0), |(se, ae), (p, t)| {
            let d = p - t;
            (se + d * d, ae + d.abs())
        });
    Ok((se / n, ae / n))
}

fn dcg(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(j, g)| g / ((j + 2) as f64).log2())
        .sum()
}

/// `DCG@k / IDCG@k` with linear gains. An all-zero ideal list scores 1.
pub fn ndcg_at_k(ranked_gains: &[f64], ideal_gains: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if ranked_gains.len() != ideal_gains.len() {
        return Err(Error::LengthMismatch(ranked_gains.len(), ideal_gains.len()));
    }
    if ranked_gains.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::InvalidParameter("gains must be nonnegative".into()));
    }
    let ideal = dcg(ideal_gains, k);
    if ideal == 0.0 {
        return Ok(1.0);
    }
    Ok(dcg(ranked_gains, k) / ideal)
}

/// NDCG over each user's test items ranked by predicted rating (ties to the
/// lower item index), averaged over users with at least one test item.
pub fn mean_ndcg(params: &LatentParams, test: &TestSet, k: Option<usize>) -> Result<f64> {
    let mut per_user: Vec<Vec<(usize, f64)>> = vec![Vec::new(); params.users()];
    for &(u, i, r) in test.triples() {
        per_user[u].push((i, r));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (u, mut rows) in per_user.into_iter().enumerate() {
        if rows.is_empty() {
            continue;
        }
        rows.sort_by(|a, b| {
            params
                .predict(u, b.0)
                .total_cmp(&params.predict(u, a.0))
                .then(a.0.cmp(&b.0))
        });
        let ranked: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let mut ideal = ranked.clone();
        ideal.sort_by(|a, b| b.total_cmp(a));
        total += ndcg_at_k(&ranked, &ideal, k.unwrap_or(ranked.len()))?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(total / count as f64)
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::UndefinedSimilarity);
    }
    let inter = a.intersection(b).count();
    Ok(inter as f64 / (a.len() + b.len() - inter) as f64)
}

/// Mean Jaccard similarity over all unordered pairs of sets.
pub fn mean_pairwise_jaccard<T: Ord>(sets: &[BTreeSet<T>]) -> Result<f64> {
    if sets.len() < 2 {
        return Err(Error::InvalidParameter("need at least two users".into()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            total += jaccard(&sets[a], &sets[b])?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Each user's cumulative set of recommended items through step `t`.
pub fn cumulative_recommendations(history: &InteractionHistory, t: usize) -> Vec<BTreeSet<usize>> {
    let mut sets = vec![BTreeSet::new(); history.users()];
    for o in history.observations().filter(|o| o.step <= t) {
        sets[o.user].insert(o.item);
    }
    sets
}

/// Mean pairwise Jaccard of cumulative recommendation sets through step `t`.
pub fn homogenization(history: &InteractionHistory, t: usize) -> Result<f64> {
    mean_pairwise_jaccard(&cumulative_recommendations(history, t))
}

/// `M(actual) − M(shadow)`
pub fn feedback_effect(metric_on_actual: f64, metric_on_shadow: f64) -> f64 {
    metric_on_actual - metric_on_shadow
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub arm: String,
    pub replication: usize,
    pub timestep: usize,
    pub metric: String,
    pub value: f64,
}

/// Metric values of one arm in one replication, one per `(metric, timestep)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    arm: String,
    replication: usize,
    records: Vec<MetricRecord>,
}

impl MetricSeries {
    pub fn new(arm: impl Into<String>, replication: usize) -> Self {
        Self {
            arm: arm.into(),
            replication,
            records: Vec::new(),
        }
    }

    pub fn arm(&self) -> &str {
        &self.arm
    }

    pub fn replication(&self) -> usize {
        self.replication
    }

    pub fn push(&mut self, timestep: usize, metric: &str, value: f64) -> Result<()> {
        if self.get(timestep, metric).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate value for {metric} at step {timestep}"
            )));
        }
        self.records.push(MetricRecord {
            arm: self.arm.clone(),
            replication: self.replication,
            timestep,
            metric: metric.to_string(),
            value,
        });
        Ok(())
    }

    pub fn get(&self, timestep: usize, metric: &str) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.timestep == timestep && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn records(&self) -> &[MetricRecord] {
        &self.records
    }

    /// Values of one metric ordered by timestep.
    pub fn values(&self, metric: &str) -> Vec<(usize, f64)> {
        let mut v: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.timestep, r.value))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0], &[3.0]).unwrap(), 2.0);
        assert!((rmse(&[0.0, 0.0], &[1.0, 2.0]).unwrap() - 2.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[], &[]), Err(Error::EmptyInput));
        assert_eq!(rmse(&[1.0], &[]), Err(Error::LengthMismatch(1, 0)));
    }

    #[test]
    fn mse_mae_examples() {
        assert_eq!(mse_mae(&[3.0], &[3.0]).unwrap(), (0.0, 0.0));
        assert_eq!(mse_mae(&[0.0], &[2.0]).unwrap(), (4.0, 2.0));
        assert_eq!(mse_mae(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), (2.5, 1.5));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[3.0, 2.0, 1.0], &[3.0, 2.0, 1.0], 3).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&[4.0], &[4.0], 1).unwrap(), 1.0);
        let l3 = 3f64.log2();
        let expect = (1.0 + 2.0 / l3) / (2.0 + 1.0 / l3);
        let got = ndcg_at_k(&[1.0, 2.0], &[2.0, 1.0], 2).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.8597).abs() < 1e-4);
        assert_eq!(ndcg_at_k(&[0.0, 0.0], &[0.0, 0.0], 2).unwrap(), 1.0);
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&set(&[1, 2]), &set(&[1, 2])).unwrap(), 1.0);
        assert_eq!(jaccard(&set(&[1]), &set(&[2])).unwrap(), 0.0);
        assert_eq!(jaccard(&set(&[1, 2, 3]), &set(&[2, 3, 4])).unwrap(), 0.5);
        let err = jaccard(&set(&[]), &set(&[])).unwrap_err();
        assert!(err.to_string().contains("undefined similarity"));
    }

    #[test]
    fn homogenization_examples() {
        let same = vec![set(&[1, 2]); 4];
        assert_eq!(mean_pairwise_jaccard(&same).unwrap(), 1.0);
        let disjoint = vec![set(&[1]), set(&[2]), set(&[3])];
        assert_eq!(mean_pairwise_jaccard(&disjoint).unwrap(), 0.0);
        let mixed = vec![set(&[1, 2]), set(&[2, 3]), set(&[5, 6])];
        assert!((mean_pairwise_jaccard(&mixed).unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn feedback_effect_examples() {
        assert_eq!(feedback_effect(2.0, 2.0), 0.0);
        assert!((feedback_effect(1.5, 1.2) - 0.3).abs() < 1e-15);
        assert_eq!(feedback_effect(1.2, 1.5), -feedback_effect(1.5, 1.2));
    }

    #[test]
    fn mean_ndcg_skips_users_without_test_items() {
        let p = LatentParams::new(1, vec![1.0, 1.0, 1.0], vec![3.0, 2.0, 1.0], 1.0).unwrap();
        let test = TestSet::new(3, 3, vec![(0, 0, 5.0), (0, 2, 1.0), (2, 1, 2.0)]).unwrap();
        assert_eq!(mean_ndcg(&p, &test, None).unwrap(), 1.0);
    }

    #[test]
    fn series_rejects_duplicates() {
        let mut s = MetricSeries::new("cafl", 0);
        s.push(1, "rmse", 1.0).unwrap();
        assert!(s.push(1, "rmse", 2.0).is_err());
        s.push(2, "rmse", 0.5).unwrap();
        assert_eq!(s.values("rmse"), vec![(1, 1.0), (2, 0.5)]);
    }

    proptest! {
        #[test]
        fn jaccard_axioms(a in proptest::collection::btree_set(0usize..20, 0..10), b in proptest::collection::btree_set(0usize..20, 1..10)) {
            let ab = jaccard(&a, &b).unwrap();
            prop_assert_eq!(ab, jaccard(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
            prop_assert_eq!(jaccard(&b, &b).unwrap(), 1.0);
        }

        #[test]
        fn ndcg_scale_invariant(gains in proptest::collection::vec(0.0f64..5.0, 1..12), scale in 0.01f64..100.0) {
            let mut ideal = gains.clone();
            ideal.sort_by(|a, b| b.total_cmp(a));
            let k = gains.len();
            prop_assert_eq!(ndcg_at_k(&ideal, &ideal, k).unwrap(), 1.0);
            let base = ndcg_at_k(&gains, &ideal, k).unwrap();
            let sg: Vec<f64> = gains.iter().map(|g| g * scale).collect();
            let si: Vec<f64> = ideal.iter().map(|g| g * scale).collect();
            prop_assert!((ndcg_at_k(&sg, &si, k).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn rmse_squared_is_mse(p in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
            let t: Vec<f64> = p.iter().map(|x| x * 0.5 + 1.0).collect();
            let r = rmse(&p, &t).unwrap();
            let (mse, _) = mse_mae(&p, &t).unwrap();
            prop_assert!((r * r - mse).abs() < 1e-12 * mse.max(1.0));
        }
    }
}
