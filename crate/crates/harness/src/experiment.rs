//! The multi-step simulation loop, paired replications, and CSV output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use recloop_core::environments::{rate_step, LatentFactorEnv, RatingEnvironment};
use recloop_core::estimators::{
    cafl_special_weights, ipw_weights, naive_weights, write_weights, CChoice, CaflOptions, WeightAssignment,
};
use recloop_core::metrics::{homogenization, mean_ndcg, mean_pairwise_jaccard, MetricSeries, TestSet};
use recloop_core::recommenders::{
    fit_als_data, fit_als_from, fit_sgd_data, recommend, MFConfig, ModelPolicy, PolicyConfig, PolicyKind,
    TrainingData,
};
use recloop_core::rng::{streams, SeededRng};
use recloop_core::{
    HistoryConfig, InteractionHistory, LatentParams, PropensityLog, RatingMatrix, RecommendationMatrix,
    StepQuota,
};

use crate::config::{Arm, CName, EstimatorName, ExperimentConfig, ModelKind};
use crate::error::{HarnessError, HarnessResult};
use crate::stats;

/// Metrics reported for every arm at every step.
pub const METRICS: [&str; 3] = ["rmse", "ndcg", "jaccard"];

/// `M(arm) − M(random_shadow)`, reported when the shadow arm runs.
pub const FEEDBACK_EFFECTS: [&str; 3] = ["rmse_feedback_effect", "ndcg_feedback_effect", "jaccard_feedback_effect"];

/// State shared by every arm of one replication.
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub env: LatentFactorEnv,
    pub test: TestSet,
    first_rec: RecommendationMatrix,
    first_ratings: RatingMatrix,
    first_props: PropensityLog,
}

impl Replication {
    /// Draw the environment, the test set and the uniformly random first
    /// slate from seed `base + index`.
    pub fn prepare(cfg: &ExperimentConfig, index: usize) -> HarnessResult<Self> {
        let seed = cfg.seed.wrapping_add(index as u64);
        let env = LatentFactorEnv::new(cfg.environment.clone(), &mut SeededRng::new(seed, streams::ENVIRONMENT))?;
        let test = TestSet::sample(&env, cfg.test_size, &mut SeededRng::new(seed, streams::TEST_SET))?;
        let blank = InteractionHistory::new(history_config(cfg, seed, StepQuota::PerUser(cfg.policy.n)))?;
        let policy = ModelPolicy {
            config: random_policy(cfg),
            params: None,
            excluded: Some(test.excluded()),
        };
        let (first_rec, first_props) =
            recommend(&policy, &blank, &mut SeededRng::new(seed, streams::FIRST_STEP), false)?;
        let first_ratings = rate_step(&env, &first_rec, &mut SeededRng::new(seed, streams::FIRST_STEP_RATINGS))?;
        Ok(Self {
            index,
            seed,
            env,
            test,
            first_rec,
            first_ratings,
            first_props,
        })
    }

    pub fn env_checksum(&self) -> u64 {
        self.env.checksum()
    }

    pub fn first_step(&self) -> &RecommendationMatrix {
        &self.first_rec
    }
}

fn history_config(cfg: &ExperimentConfig, seed: u64, quota: StepQuota) -> HistoryConfig {
    HistoryConfig {
        users: cfg.environment.users,
        items: cfg.environment.items,
        quota,
        no_repeat: cfg.policy.no_repeat,
        seed,
    }
}

fn random_policy(cfg: &ExperimentConfig) -> PolicyConfig {
    PolicyConfig {
        kind: PolicyKind::UniformRandom,
        n: cfg.policy.n,
        no_repeat: cfg.policy.no_repeat,
    }
}

/// Result of running one arm for `T` steps.
pub struct ArmOutput {
    pub series: MetricSeries,
    pub history: InteractionHistory,
    /// Training weights of the final retrain.
    pub weights: WeightAssignment,
    pub params: LatentParams,
}

/// Training weights for `arm` on its own history.
pub fn arm_weights(cfg: &ExperimentConfig, arm: Arm, history: &InteractionHistory) -> recloop_core::Result<WeightAssignment> {
    let w = match arm {
        Arm::Cafl => match cfg.estimator.estimator {
            EstimatorName::Naive => naive_weights(history),
            EstimatorName::Ipw => ipw_weights(history)?,
            EstimatorName::Cafl => {
                let opts = CaflOptions {
                    c: match cfg.estimator.c {
                        CName::Formula => CChoice::Formula,
                        CName::Uniform => CChoice::Uniform,
                    },
                    ..Default::default()
                };
                cafl_special_weights(history, &opts)?
            }
        },
        Arm::Feedback | Arm::Uniform | Arm::RandomShadow => naive_weights(history),
    };
    Ok(if cfg.estimator.normalize { w.normalized() } else { w })
}

fn fit(cfg: &ExperimentConfig, mf: &MFConfig, data: &TrainingData, prev: Option<&LatentParams>) -> recloop_core::Result<LatentParams> {
    match (cfg.model.model, prev) {
        (ModelKind::Als, Some(p)) if cfg.warm_start => fit_als_from(data, mf, p.clone()),
        (ModelKind::Als, _) => fit_als_data(data, mf),
        (ModelKind::Sgd, _) => fit_sgd_data(data, mf),
    }
}

/// Run one arm of a prepared replication.
///
/// Feedback and CAFL recommend from their own model. Uniform and the shadow
/// observe a uniformly random unconsumed slate per user, from separate
/// streams; both also draw model-based recommendations that are never shown,
/// only to score homogenization.
pub fn run_arm(cfg: &ExperimentConfig, arm: Arm, rep: &Replication) -> HarnessResult<ArmOutput> {
    let (users, n) = (cfg.environment.users, cfg.policy.n);
    let base = streams::ARM_BASE + arm.index() * streams::ARM_STRIDE;
    let mut rec_rng = SeededRng::new(rep.seed, base);
    let mut rating_rng = SeededRng::new(rep.seed, base + 1);
    let mut virtual_rng = SeededRng::new(rep.seed, base + 2);
    let mf = cfg.model.mf_config(rep.seed);
    let wrap = |step: usize| {
        move |source: recloop_core::Error| HarnessError::Arm {
            arm: arm.as_str().into(),
            replication: rep.index,
            step,
            source,
        }
    };

    let mut history = InteractionHistory::new(history_config(cfg, rep.seed, StepQuota::PerUser(n)))
        .and_then(|h| h.record_step(&rep.first_rec, &rep.first_ratings, rep.first_props.clone(), None))
        .map_err(wrap(1))?;

    let shows_model = matches!(arm, Arm::Feedback | Arm::Cafl);
    let blank = InteractionHistory::new(history_config(cfg, rep.seed, StepQuota::PerUser(n)))?;
    let mut virtual_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); users];
    let mut virtual_excluded = rep.test.excluded().clone();
    for (u, i) in rep.first_rec.pairs() {
        virtual_sets[u].insert(i);
        virtual_excluded.insert(u, i)?;
    }

    let mut series = MetricSeries::new(arm.as_str(), rep.index);
    let mut current: Option<(LatentParams, WeightAssignment)> = None;
    for t in 1..=cfg.horizon {
        if t > 1 {
            let params = current.as_ref().map(|c| &c.0);
            let (rec, props) = match arm {
                Arm::Feedback | Arm::Cafl => {
                    let policy = ModelPolicy {
                        config: cfg.policy.policy_config(),
                        params,
                        excluded: Some(rep.test.excluded()),
                    };
                    recommend(&policy, &history, &mut rec_rng, false)
                }
                Arm::Uniform | Arm::RandomShadow => {
                    let policy = ModelPolicy {
                        config: random_policy(cfg),
                        params: None,
                        excluded: Some(rep.test.excluded()),
                    };
                    recommend(&policy, &history, &mut rec_rng, false)
                }
            }
            .map_err(wrap(t))?;
            let ratings = rate_step(&rep.env, &rec, &mut rating_rng).map_err(wrap(t))?;
            history = history.record_step(&rec, &ratings, props, None).map_err(wrap(t))?;
        }

        if current.is_none() || (t - 1) % cfg.retrain_every == 0 {
            let weights = arm_weights(cfg, arm, &history).map_err(wrap(t))?;
            let data = TrainingData::from_history(&history, &weights).map_err(wrap(t))?;
            let params = fit(cfg, &mf, &data, current.as_ref().map(|c| &c.0)).map_err(wrap(t))?;
            current = Some((params, weights));
        }
        let params = &current.as_ref().unwrap().0;

        let rmse = rep.test.rmse(params).map_err(wrap(t))?;
        let ndcg = mean_ndcg(params, &rep.test, None).map_err(wrap(t))?;
        let jaccard = if shows_model {
            homogenization(&history, t)
        } else {
            mean_pairwise_jaccard(&virtual_sets)
        }
        .map_err(wrap(t))?;
        for (m, v) in METRICS.iter().zip([rmse, ndcg, jaccard]) {
            series.push(t, m, v)?;
        }

        if !shows_model && t < cfg.horizon {
            let policy = ModelPolicy {
                config: cfg.policy.policy_config(),
                params: Some(params),
                excluded: Some(&virtual_excluded),
            };
            let (rec, _) = recommend(&policy, &blank, &mut virtual_rng, false).map_err(wrap(t + 1))?;
            for (u, i) in rec.pairs() {
                virtual_sets[u].insert(i);
                virtual_excluded.insert(u, i)?;
            }
        }
    }
    let (params, weights) = current.expect("horizon is at least one step");
    Ok(ArmOutput {
        series,
        history,
        weights,
        params,
    })
}

/// Everything one replication produced.
pub struct ReplicationOutput {
    pub index: usize,
    pub env_checksum: u64,
    /// One series per configured arm, in configuration order.
    pub series: Vec<MetricSeries>,
    pub weights: Vec<(Arm, WeightAssignment)>,
}

/// Run every configured arm on replication `index`, sequentially, and add
/// feedback-effect metrics when the shadow arm is present.
pub fn run_replication(cfg: &ExperimentConfig, index: usize) -> HarnessResult<ReplicationOutput> {
    let rep = Replication::prepare(cfg, index)?;
    let mut outputs = Vec::with_capacity(cfg.arms.len());
    for &arm in &cfg.arms {
        outputs.push((arm, run_arm(cfg, arm, &rep)?));
    }
    if let Some(pos) = cfg.arms.iter().position(|a| *a == Arm::RandomShadow) {
        let shadow = outputs[pos].1.series.clone();
        for (_, out) in outputs.iter_mut() {
            for t in 1..=cfg.horizon {
                for (m, fe) in METRICS.iter().zip(FEEDBACK_EFFECTS) {
                    let v = out.series.get(t, m).unwrap() - shadow.get(t, m).unwrap();
                    out.series.push(t, fe, v)?;
                }
            }
        }
    }
    let (series, weights) = outputs.into_iter().map(|(a, o)| (o.series, (a, o.weights))).unzip();
    Ok(ReplicationOutput {
        index,
        env_checksum: rep.env_checksum(),
        series,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: String,
    pub timestep: usize,
    pub metric: String,
    pub mean: f64,
    pub ci_halfwidth: Option<f64>,
}

pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replications: Vec<ReplicationOutput>,
}

impl ExperimentReport {
    fn arm_rank(&self, arm: &str) -> usize {
        self.config.arms.iter().position(|a| a.as_str() == arm).unwrap_or(usize::MAX)
    }

    /// `(arm, replication, timestep, metric, value)` sorted by arm order,
    /// replication, timestep and metric name.
    pub fn rows(&self) -> Vec<(String, usize, usize, String, f64)> {
        let mut rows: Vec<_> = self
            .replications
            .iter()
            .flat_map(|r| r.series.iter())
            .flat_map(|s| s.records().iter())
            .map(|r| (r.arm.clone(), r.replication, r.timestep, r.metric.clone(), r.value))
            .collect();
        rows.sort_by(|a, b| {
            (self.arm_rank(&a.0), a.1, a.2, &a.3).cmp(&(self.arm_rank(&b.0), b.1, b.2, &b.3))
        });
        rows
    }

    /// Mean and CI half-width across replications per `(arm, timestep, metric)`.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut groups: BTreeMap<(usize, usize, String), (String, Vec<f64>)> = BTreeMap::new();
        for (arm, _, t, metric, v) in self.rows() {
            groups
                .entry((self.arm_rank(&arm), t, metric))
                .or_insert_with(|| (arm, Vec::new()))
                .1
                .push(v);
        }
        groups
            .into_iter()
            .map(|((_, timestep, metric), (arm, xs))| SummaryRow {
                arm,
                timestep,
                metric,
                mean: stats::mean(&xs),
                ci_halfwidth: stats::ci_halfwidth(&xs, self.config.ci),
            })
            .collect()
    }

    /// Per-replication values of `metric` for `arm` at step `t`.
    pub fn values_at(&self, arm: Arm, t: usize, metric: &str) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.series.iter().find(|s| s.arm() == arm.as_str()))
            .filter_map(|s| s.get(t, metric))
            .collect()
    }

    /// Per-replication values of `metric` for `arm` at the final step.
    pub fn final_values(&self, arm: Arm, metric: &str) -> Vec<f64> {
        self.values_at(arm, self.config.horizon, metric)
    }

    pub fn env_checksums(&self) -> Vec<u64> {
        self.replications.iter().map(|r| r.env_checksum).collect()
    }
}

/// Run all arms on all replications; replications execute in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<ExperimentReport> {
    cfg.validate()?;
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<HarnessResult<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: cfg.clone(),
        replications,
    })
}

/// Write `results.csv` and `summary.csv` into `dir`, plus one weights file
/// per arm and replication when `dump_weights` is set. Returns the paths.
pub fn write_csv(report: &ExperimentReport, dir: &Path) -> HarnessResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&results)?;
    w.write_record(["arm", "replication", "timestep", "metric", "value"])?;
    for (arm, rep, t, metric, v) in report.rows() {
        w.write_record([arm, rep.to_string(), t.to_string(), metric, v.to_string()])?;
    }
    w.flush()?;

    let summary = dir.join("summary.csv");
    let with_ci = report.config.replications >= 2;
    let mut w = csv::Writer::from_path(&summary)?;
    if with_ci {
        w.write_record(["arm", "timestep", "metric", "mean", "ci_halfwidth"])?;
    } else {
        w.write_record(["arm", "timestep", "metric", "mean"])?;
    }
    for row in report.summary() {
        let mut rec = vec![row.arm, row.timestep.to_string(), row.metric, row.mean.to_string()];
        if with_ci {
            rec.push(row.ci_halfwidth.map(|h| h.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut paths = vec![results, summary];
    if report.config.estimator.dump_weights {
        for r in &report.replications {
            for (arm, weights) in &r.weights {
                let path = dir.join(format!("weights_{}_{}.csv", arm.as_str(), r.index));
                write_weights(weights, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
                paths.push(path);
            }
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.environment.users = 12;
        cfg.environment.items = 15;
        cfg.model.k = 3;
        cfg.horizon = 4;
        cfg.test_size = 30;
        cfg.replications = 2;
        cfg
    }

    #[test]
    fn arms_share_first_step_and_environment() {
        let cfg = small();
        let rep = Replication::prepare(&cfg, 0).unwrap();
        for arm in Arm::ALL {
            let out = run_arm(&cfg, arm, &rep).unwrap();
            let first: Vec<_> = out.history.step(1).unwrap().observations().to_vec();
            let expect: Vec<_> = rep.first_step().pairs().collect();
            assert_eq!(first.iter().map(|o| (o.user, o.item)).collect::<Vec<_>>(), expect);
            assert_eq!(out.history.horizon(), cfg.horizon);
        }
    }

    #[test]
    fn no_test_pair_is_ever_recommended() {
        let cfg = small();
        let rep = Replication::prepare(&cfg, 1).unwrap();
        for arm in Arm::ALL {
            let out = run_arm(&cfg, arm, &rep).unwrap();
            assert!(out.history.observations().all(|o| !rep.test.excluded().contains(o.user, o.item)));
        }
    }

    #[test]
    fn uniform_arm_logs_uniform_propensity() {
        let cfg = small();
        let rep = Replication::prepare(&cfg, 0).unwrap();
        let out = run_arm(&cfg, Arm::Uniform, &rep).unwrap();
        for o in out.history.step(2).unwrap().observations() {
            let feasible = cfg.environment.items
                - 1
                - rep.test.triples().iter().filter(|t| t.0 == o.user).count();
            assert_eq!(o.propensity, 1.0 / feasible as f64);
        }
    }

    #[test]
    fn shadow_effect_is_zero_on_itself() {
        let cfg = small();
        let out = run_replication(&cfg, 0).unwrap();
        let shadow = out.series.iter().find(|s| s.arm() == "random_shadow").unwrap();
        for (_, v) in shadow.values("rmse_feedback_effect") {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn cafl_weights_have_mean_one() {
        let cfg = small();
        let rep = Replication::prepare(&cfg, 0).unwrap();
        let out = run_arm(&cfg, Arm::Cafl, &rep).unwrap();
        let mean = out.weights.total() / out.weights.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
    }
}
