//! Per-observation loss weights.
//!
//! Every estimator here turns an [`InteractionHistory`] into a
//! [`WeightAssignment`]: one nonnegative weight per observed `(s, u, i)`.
//! A weighted trainer then maximizes `Σ w_{sui} log P_Θ(R_{sui})`. Terms with
//! `A_{s,ui} = 0` carry no parameter dependence and are dropped.

pub mod oracle;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{InteractionHistory, LatentParams, StepQuota};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Naive,
    Ipw,
    CaflGeneral,
    CaflSpecial,
    /// Inverse empirical item frequency.
    Popularity,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Naive => "naive",
            Scheme::Ipw => "ipw",
            Scheme::CaflGeneral => "cafl_general",
            Scheme::CaflSpecial => "cafl_special",
            Scheme::Popularity => "popularity",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedObservation {
    pub step: usize,
    pub user: usize,
    pub item: usize,
    pub weight: f64,
}

/// Weights keyed by `(s, u, i)`, stored sorted in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAssignment {
    scheme: Scheme,
    entries: Vec<WeightedObservation>,
    dropped_unobserved_terms: usize,
}

impl WeightAssignment {
    pub fn new(scheme: Scheme, mut entries: Vec<WeightedObservation>) -> Result<Self> {
        if let Some(bad) = entries.iter().find(|e| !(e.weight >= 0.0 && e.weight.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "weight {} at ({}, {}, {}) is not a finite nonnegative number",
                bad.weight, bad.step, bad.user, bad.item
            )));
        }
        entries.sort_by_key(|e| (e.step, e.user, e.item));
        if entries
            .windows(2)
            .any(|w| (w[0].step, w[0].user, w[0].item) == (w[1].step, w[1].user, w[1].item))
        {
            return Err(Error::InvalidParameter("duplicate (s, u, i) key".into()));
        }
        Ok(Self {
            scheme,
            entries,
            dropped_unobserved_terms: 0,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn entries(&self) -> &[WeightedObservation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, step: usize, user: usize, item: usize) -> Option<f64> {
        self.entries
            .binary_search_by_key(&(step, user, item), |e| (e.step, e.user, e.item))
            .ok()
            .map(|k| self.entries[k].weight)
    }

    /// Blocked-step terms skipped because the pair had no observation to
    /// average over. Always 0 outside [`cafl_general_weights`].
    pub fn dropped_unobserved_terms(&self) -> usize {
        self.dropped_unobserved_terms
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }

    /// Same weights rescaled to mean 1. The argmax of the weighted objective
    /// is unchanged when λ = 0; with ridge it keeps the data-to-prior ratio
    /// comparable across schemes.
    pub fn normalized(&self) -> Self {
        let mean = self.total() / self.len().max(1) as f64;
        let mut out = self.clone();
        if mean > 0.0 {
            for e in &mut out.entries {
                e.weight /= mean;
            }
        }
        out
    }

    /// Check that the keys are exactly the observed `(s, u, i)` of `history`.
    pub fn check_coverage(&self, history: &InteractionHistory) -> Result<()> {
        if self.len() != history.num_observations() {
            return Err(Error::WeightCoverage(format!(
                "{} weights for {} observations",
                self.len(),
                history.num_observations()
            )));
        }
        for (e, o) in self.entries.iter().zip(history.observations()) {
            if (e.step, e.user, e.item) != (o.step, o.user, o.item) {
                return Err(Error::WeightCoverage(format!(
                    "weight key ({}, {}, {}) does not match observation ({}, {}, {})",
                    e.step, e.user, e.item, o.step, o.user, o.item
                )));
            }
        }
        Ok(())
    }

    /// `Σ w_{sui} log P_Θ(R_{sui})` over the observations of `history`.
    pub fn objective(&self, history: &InteractionHistory, params: &LatentParams) -> Result<f64> {
        self.check_coverage(history)?;
        Ok(self
            .entries
            .iter()
            .zip(history.observations())
            .map(|(e, o)| e.weight * params.log_likelihood(o.user, o.item, o.rating))
            .sum())
    }
}

fn from_history(
    history: &InteractionHistory,
    scheme: Scheme,
    mut weight: impl FnMut(usize, usize, usize, f64) -> Result<f64>,
) -> Result<WeightAssignment> {
    let entries = history
        .observations()
        .map(|o| {
            Ok(WeightedObservation {
                step: o.step,
                user: o.user,
                item: o.item,
                weight: weight(o.step, o.user, o.item, o.propensity)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WeightAssignment::new(scheme, entries)
}

/// Weight 1 for every observation: plain pooled maximum likelihood.
pub fn naive_weights(history: &InteractionHistory) -> WeightAssignment {
    from_history(history, Scheme::Naive, |_, _, _, _| Ok(1.0))
        .expect("unit weights are always valid")
}

/// `1 / P(A_{s,ui} = 1 | Θ̂_{s-1})` from the logged propensities.
///
/// When a step carries a full propensity table, every pair must have positive
/// probability at that step; a zero anywhere means the estimator is biased
/// and the CAFL weights should be used instead.
pub fn ipw_weights(history: &InteractionHistory) -> Result<WeightAssignment> {
    let items = history.items();
    for step in history.steps() {
        if let Some(table) = step.propensity_table() {
            if let Some(k) = table.iter().position(|&p| !(p > 0.0)) {
                return Err(Error::PositivityViolated {
                    step: step.timestep(),
                    user: k / items,
                    item: k % items,
                    propensity: table[k],
                });
            }
        }
    }
    from_history(history, Scheme::Ipw, |step, user, item, p| {
        if p > 0.0 {
            Ok(1.0 / p)
        } else {
            Err(Error::PositivityViolated {
                step,
                user,
                item,
                propensity: p,
            })
        }
    })
}

/// Per-step constants `c_1..c_t` multiplying each step's objective term.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector(Vec<f64>);

impl CVector {
    /// `c ≡ 1`.
    pub fn uniform(t: usize) -> Self {
        Self(vec![1.0; t])
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter("c entries must be positive".into()));
        }
        let t = values.len() as f64;
        let sum: f64 = values.iter().sum();
        if (sum - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::InvalidParameter(format!("c sums to {sum}, expected {t}")));
        }
        Ok(Self(values))
    }

    /// `c_s` for `s` in `1..=t`.
    pub fn get(&self, s: usize) -> f64 {
        self.0[s - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `Σ_{r=s+1..t} c_r`
    pub fn tail_sum(&self, s: usize) -> f64 {
        self.0[s..].iter().sum()
    }
}

/// `c_s = C(C−t) / ((C−s)(C−s+1))` for a catalogue of `C` pairs.
pub fn compute_c(t: usize, catalogue: usize) -> Result<CVector> {
    if t >= catalogue {
        return Err(Error::HorizonExhaustsCatalogue {
            horizon: t,
            catalogue,
        });
    }
    let n = catalogue as f64;
    let tf = t as f64;
    Ok(CVector(
        (1..=t)
            .map(|s| {
                let s = s as f64;
                n * (n - tf) / ((n - s) * (n - s + 1.0))
            })
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CChoice {
    #[default]
    Formula,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CaflOptions {
    /// Size of the sequence each one-per-step slate draws from. Defaults to
    /// `U·I` under a total quota and `I` under a per-user quota.
    pub catalogue: Option<usize>,
    pub c: CChoice,
    /// Evaluation horizon; defaults to the history's length.
    pub horizon: Option<usize>,
}

impl CaflOptions {
    pub fn catalogue_for(&self, history: &InteractionHistory) -> usize {
        self.catalogue.unwrap_or(match history.config().quota {
            StepQuota::Total(_) => history.users() * history.items(),
            StepQuota::PerUser(_) => history.items(),
        })
    }

    fn horizon_for(&self, history: &InteractionHistory) -> Result<usize> {
        let t = self.horizon.unwrap_or(history.horizon());
        if t < history.horizon() {
            return Err(Error::InvalidParameter(format!(
                "evaluation horizon {t} precedes recorded steps ({})",
                history.horizon()
            )));
        }
        Ok(t)
    }

    pub fn c_vector(&self, history: &InteractionHistory) -> Result<CVector> {
        let t = self.horizon_for(history)?;
        let catalogue = self.catalogue_for(history);
        match self.c {
            CChoice::Formula => compute_c(t, catalogue),
            CChoice::Uniform => {
                if t >= catalogue {
                    return Err(Error::HorizonExhaustsCatalogue {
                        horizon: t,
                        catalogue,
                    });
                }
                Ok(CVector::uniform(t))
            }
        }
    }
}

/// Weights for the no-repeat regime where a pair is blocked at every step
/// after its recommendation.
///
/// An observation at step `s` gets `c_s / p + Σ_{r>s} c_r`: the inverse
/// propensity term plus one copy of its log-likelihood for each later step
/// at which it could not be recommended. With the default `c` this is
/// `(C/(C−s))·((t−s) + ((C−t)/(C−s+1))/p)`.
pub fn cafl_special_weights(
    history: &InteractionHistory,
    opts: &CaflOptions,
) -> Result<WeightAssignment> {
    if !history.no_repeat() {
        return Err(Error::RequiresNoRepeat);
    }
    let c = opts.c_vector(history)?;
    from_history(history, Scheme::CaflSpecial, |step, user, item, p| {
        if !(p > 0.0) {
            return Err(Error::PropensityLog {
                step,
                reason: format!("missing propensity for ({user}, {item})"),
            });
        }
        Ok(c.get(step) / p + c.tail_sum(step))
    })
}

/// Weights for arbitrary positivity patterns, read from the full propensity
/// tables.
///
/// For each pair: at steps where its propensity is positive the observation
/// term is `c_s / p`. At each blocked step `r` the pair contributes `c_r`
/// times the mean log-likelihood of its observations at positive-propensity
/// steps, which spreads `c_r / |O|` onto each of those observations. If the
/// pair has no such observation the blocked term is skipped and counted in
/// [`WeightAssignment::dropped_unobserved_terms`].
pub fn cafl_general_weights(
    history: &InteractionHistory,
    opts: &CaflOptions,
) -> Result<WeightAssignment> {
    let c = opts.c_vector(history)?;
    let (users, items) = (history.users(), history.items());
    let mut tables = Vec::with_capacity(history.horizon());
    for step in history.steps() {
        let table = step
            .propensity_table()
            .ok_or(Error::MissingPropensityTable(step.timestep()))?;
        if table.len() != users * items {
            return Err(Error::PropensityLog {
                step: step.timestep(),
                reason: format!("table has {} entries, expected {}", table.len(), users * items),
            });
        }
        tables.push(table);
    }
    let t = c.len();
    // Padding steps beyond the recorded history are treated as positive and
    // unobserved, matching an evaluation horizon set ahead of the data.
    let positive = |s: usize, k: usize| s > tables.len() || tables[s - 1][k] > 0.0;

    let mut blocked_mass = vec![0.0; users * items];
    let mut ever_positive = vec![false; users * items];
    for k in 0..users * items {
        for s in 1..=t {
            if positive(s, k) {
                ever_positive[k] = true;
            } else {
                blocked_mass[k] += c.get(s);
            }
        }
    }

    let mut observed_count = vec![0usize; users * items];
    for o in history.observations() {
        let k = o.user * items + o.item;
        if !positive(o.step, k) {
            return Err(Error::PropensityLog {
                step: o.step,
                reason: format!(
                    "pair ({}, {}) was recommended with tabled propensity 0",
                    o.user, o.item
                ),
            });
        }
        observed_count[k] += 1;
    }

    for k in 0..users * items {
        if t > 0 && !ever_positive[k] {
            return Err(Error::NeverRecommendable {
                user: k / items,
                item: k % items,
            });
        }
    }
    let dropped = (0..users * items)
        .filter(|&k| observed_count[k] == 0 && blocked_mass[k] > 0.0)
        .map(|k| (1..=t).filter(|&s| !positive(s, k)).count())
        .sum();

    let mut out = from_history(history, Scheme::CaflGeneral, |step, user, item, p| {
        let k = user * items + item;
        Ok(c.get(step) / p + blocked_mass[k] / observed_count[k] as f64)
    })?;
    out.dropped_unobserved_terms = dropped;
    Ok(out)
}

/// `1 / n_i`, where `n_i` counts how often item `i` appears in the history.
pub fn popularity_weights(history: &InteractionHistory) -> WeightAssignment {
    let mut freq = vec![0usize; history.items()];
    for o in history.observations() {
        freq[o.item] += 1;
    }
    from_history(history, Scheme::Popularity, |_, _, item, _| {
        Ok(1.0 / freq[item] as f64)
    })
    .expect("inverse counts of observed items are finite")
}

/// Audit dump with columns `s,u,i,weight,scheme`.
pub fn write_weights<W: Write>(weights: &WeightAssignment, mut out: W) -> std::io::Result<()> {
    writeln!(out, "s,u,i,weight,scheme")?;
    for e in weights.entries() {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.step,
            e.user,
            e.item,
            e.weight,
            weights.scheme()
        )?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_support {
    use rand::Rng;

    use crate::history::*;
    use crate::rng::SeededRng;

    /// Random history where each step picks `n` unconsumed pairs (total
    /// quota) or one unconsumed item per user, and logs a full table whose
    /// zeros mark consumed pairs.
    pub fn random_history(
        users: usize,
        items: usize,
        quota: StepQuota,
        horizon: usize,
        no_repeat: bool,
        rng: &mut SeededRng,
    ) -> InteractionHistory {
        let mut h = InteractionHistory::new(HistoryConfig {
            users,
            items,
            quota,
            no_repeat,
            seed: 0,
        })
        .unwrap();
        for t in 1..=horizon {
            let mut rec = RecommendationMatrix::new(users, items, t).unwrap();
            let mut ratings = RatingMatrix::new(users, items, t).unwrap();
            let mut props = PropensityLog::new(t);
            // Random positive scores on feasible pairs, normalized per slate.
            let raw: Vec<f64> = (0..users * items)
                .map(|k| {
                    if no_repeat && h.is_consumed(k / items, k % items) {
                        0.0
                    } else {
                        rng.random_range(0.2..1.0)
                    }
                })
                .collect();
            let mut table = vec![0.0; users * items];
            let slates: Vec<Vec<usize>> = match quota {
                StepQuota::Total(_) => vec![(0..users * items).collect()],
                StepQuota::PerUser(_) => (0..users)
                    .map(|u| (u * items..(u + 1) * items).collect())
                    .collect(),
            };
            for slate in slates {
                let z: f64 = slate.iter().map(|&k| raw[k]).sum();
                for &k in &slate {
                    table[k] = raw[k] / z;
                }
                let mut x = rng.random::<f64>() * z;
                let mut pick = *slate.iter().rev().find(|&&k| raw[k] > 0.0).unwrap();
                for &k in &slate {
                    if raw[k] > 0.0 && x < raw[k] {
                        pick = k;
                        break;
                    }
                    x -= raw[k];
                }
                let (u, i) = (pick / items, pick % items);
                rec.set(u, i).unwrap();
                ratings.set(u, i, rng.random_range(1.0..5.0)).unwrap();
                props.push(u, i, table[pick]);
            }
            h = h.record_step(&rec, &ratings, props.with_table(table), None).unwrap();
        }
        h
    }
}
