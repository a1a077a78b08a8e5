//! Exposure-driven benchmark on the Dirichlet environment.
//!
//! Users consume one item per step from a similarity-boosted exposure
//! distribution. The leading `train_steps` steps are the training set, the
//! test set is drawn uniformly from items never exposed, and one model per
//! weighting scheme is trained on the same data.

use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;

use recloop_core::environments::{rate_step, DirichletEnv, RatingEnvironment};
use recloop_core::estimators::{
    cafl_special_weights, naive_weights, popularity_weights, write_weights, CaflOptions, WeightAssignment,
};
use recloop_core::metrics::TestSet;
use recloop_core::recommenders::{fit_als_data, fit_sgd_data, recommend, PanExposurePolicy, TrainingData};
use recloop_core::rng::{streams, SeededRng};
use recloop_core::{HistoryConfig, InteractionHistory, StepQuota};

use crate::config::{CiMethod, ModelKind, PanConfig, PanScheme};
use crate::error::{HarnessError, HarnessResult};
use crate::stats::{self, PairedTest};

/// Simulated exposure history plus its held-out ratings.
pub struct PanData {
    pub env: DirichletEnv,
    /// All `sim_steps` steps.
    pub full: InteractionHistory,
    /// The leading `train_steps` steps.
    pub train: InteractionHistory,
    pub test: TestSet,
}

impl PanConfig {
    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.train_steps == 0 || self.train_steps > self.sim_steps {
            return bad(format!("train_steps must be in 1..={}", self.sim_steps));
        }
        if self.sim_steps + self.test_per_user > self.environment.items {
            return bad(format!(
                "sim_steps + test_per_user = {} exceeds {} items",
                self.sim_steps + self.test_per_user,
                self.environment.items
            ));
        }
        if self.replications == 0 || self.schemes.is_empty() {
            return bad("need at least one replication and one scheme".into());
        }
        self.model.mf_config(0).validate()?;
        Ok(())
    }
}

/// Simulate one replication's data from `seed`.
pub fn simulate_pan(cfg: &PanConfig, seed: u64) -> HarnessResult<PanData> {
    let env = DirichletEnv::new(cfg.environment.clone(), &mut SeededRng::new(seed, streams::ENVIRONMENT))?;
    let (users, items) = (env.users(), env.items());
    let mut history = InteractionHistory::new(HistoryConfig {
        users,
        items,
        quota: StepQuota::PerUser(1),
        no_repeat: true,
        seed,
    })?;
    let policy = PanExposurePolicy { env: &env, n: 1 };
    let mut rec_rng = SeededRng::new(seed, streams::EXPOSURE);
    let mut rating_rng = SeededRng::new(seed, streams::EXPOSURE_RATINGS);
    for _ in 0..cfg.sim_steps {
        let (rec, props) = recommend(&policy, &history, &mut rec_rng, false)?;
        let ratings = rate_step(&env, &rec, &mut rating_rng)?;
        history = history.record_step(&rec, &ratings, props, None)?;
    }

    let mut pick_rng = SeededRng::new(seed, streams::TEST_SET);
    let mut rating_rng = SeededRng::new(seed, streams::TEST_RATINGS);
    let mut triples = Vec::with_capacity(users * cfg.test_per_user);
    for u in 0..users {
        let open: Vec<usize> = (0..items).filter(|&i| !history.is_consumed(u, i)).collect();
        let mut picks = index::sample(&mut pick_rng, open.len(), cfg.test_per_user).into_vec();
        picks.sort_unstable();
        for k in picks {
            let i = open[k];
            triples.push((u, i, env.sample_rating(u, i, &mut rating_rng)?));
        }
    }
    let test = TestSet::new(users, items, triples)?;
    let train = history.truncated(cfg.train_steps);
    Ok(PanData {
        env,
        full: history,
        train,
        test,
    })
}

pub fn scheme_weights(cfg: &PanConfig, scheme: PanScheme, history: &InteractionHistory) -> HarnessResult<WeightAssignment> {
    let w = match scheme {
        PanScheme::Naive => naive_weights(history),
        PanScheme::Popularity => popularity_weights(history),
        PanScheme::Cafl => cafl_special_weights(history, &CaflOptions::default())?,
    };
    Ok(if cfg.normalize { w.normalized() } else { w })
}

pub struct PanReplication {
    pub index: usize,
    pub env_checksum: u64,
    /// `(mse, mae)` per configured scheme.
    pub errors: Vec<(f64, f64)>,
    pub weights: Vec<WeightAssignment>,
}

pub fn run_pan_replication(cfg: &PanConfig, base_seed: u64, index: usize) -> HarnessResult<PanReplication> {
    let seed = base_seed.wrapping_add(index as u64);
    let data = simulate_pan(cfg, seed)?;
    let mf = cfg.model.mf_config(seed);
    let mut errors = Vec::with_capacity(cfg.schemes.len());
    let mut weights = Vec::new();
    for &scheme in &cfg.schemes {
        let w = scheme_weights(cfg, scheme, &data.train)?;
        let train = TrainingData::from_history(&data.train, &w)?;
        let params = match cfg.model.model {
            ModelKind::Sgd => fit_sgd_data(&train, &mf)?,
            ModelKind::Als => fit_als_data(&train, &mf)?,
        };
        errors.push(data.test.mse_mae(&params)?);
        if cfg.dump_weights {
            weights.push(w);
        }
    }
    Ok(PanReplication {
        index,
        env_checksum: data.env.checksum(),
        errors,
        weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanRow {
    pub scheme: PanScheme,
    pub mse_mean: f64,
    pub mse_ci: Option<f64>,
    pub mae_mean: f64,
    pub mae_ci: Option<f64>,
}

pub struct PanReport {
    pub config: PanConfig,
    pub ci: CiMethod,
    pub replications: Vec<PanReplication>,
}

impl PanReport {
    /// Per-replication `(mse, mae)` vectors for `scheme`.
    pub fn values(&self, scheme: PanScheme) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.config.schemes.iter().position(|s| *s == scheme)?;
        Some(self.replications.iter().map(|r| r.errors[k]).unzip())
    }

    pub fn rows(&self) -> Vec<PanRow> {
        self.config
            .schemes
            .iter()
            .map(|&scheme| {
                let (mse, mae) = self.values(scheme).unwrap();
                PanRow {
                    scheme,
                    mse_mean: stats::mean(&mse),
                    mse_ci: stats::ci_halfwidth(&mse, self.ci),
                    mae_mean: stats::mean(&mae),
                    mae_ci: stats::ci_halfwidth(&mae, self.ci),
                }
            })
            .collect()
    }

    /// Paired one-sided test of MSE(`a`) < MSE(`b`).
    pub fn mse_test(&self, a: PanScheme, b: PanScheme) -> Option<PairedTest> {
        let (x, _) = self.values(a)?;
        let (y, _) = self.values(b)?;
        (x.len() >= 2).then(|| stats::paired_t_less(&x, &y))
    }

    /// Plain-text table with one line per scheme and the CAFL comparisons.
    pub fn format_table(&self) -> String {
        let fmt = |m: f64, ci: Option<f64>| match ci {
            Some(h) => format!("{m:.4} ± {h:.4}"),
            None => format!("{m:.4}"),
        };
        let mut out = format!("{:<12} {:>22} {:>22}\n", "scheme", "MSE", "MAE");
        for r in self.rows() {
            out += &format!(
                "{:<12} {:>22} {:>22}\n",
                r.scheme.as_str(),
                fmt(r.mse_mean, r.mse_ci),
                fmt(r.mae_mean, r.mae_ci)
            );
        }
        for other in [PanScheme::Naive, PanScheme::Popularity] {
            if let Some(t) = self.mse_test(PanScheme::Cafl, other) {
                out += &format!(
                    "MSE(cafl) < MSE({}): mean diff {:.5}, one-sided p = {:.4}\n",
                    other.as_str(),
                    t.mean_diff,
                    t.p_less
                );
            }
        }
        out
    }
}

pub fn run_pan_benchmark(cfg: &PanConfig, seed: u64, ci: CiMethod) -> HarnessResult<PanReport> {
    cfg.validate()?;
    let replications = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_pan_replication(cfg, seed, r))
        .collect::<HarnessResult<Vec<_>>>()?;
    Ok(PanReport {
        config: cfg.clone(),
        ci,
        replications,
    })
}

/// Write `pan_results.csv` (per replication) and `pan_summary.csv`.
pub fn write_pan_csv(report: &PanReport, dir: &Path) -> HarnessResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let results = dir.join("pan_results.csv");
    let mut w = csv::Writer::from_path(&results)?;
    w.write_record(["scheme", "replication", "mse", "mae"])?;
    for r in &report.replications {
        for (scheme, (mse, mae)) in report.config.schemes.iter().zip(&r.errors) {
            w.write_record([scheme.as_str().to_string(), r.index.to_string(), mse.to_string(), mae.to_string()])?;
        }
    }
    w.flush()?;

    let summary = dir.join("pan_summary.csv");
    let mut w = csv::Writer::from_path(&summary)?;
    w.write_record(["scheme", "mse_mean", "mse_ci_halfwidth", "mae_mean", "mae_ci_halfwidth"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in report.rows() {
        w.write_record([
            row.scheme.as_str().to_string(),
            row.mse_mean.to_string(),
            opt(row.mse_ci),
            row.mae_mean.to_string(),
            opt(row.mae_ci),
        ])?;
    }
    w.flush()?;

    let mut paths = vec![results, summary];
    for r in &report.replications {
        for (scheme, weights) in report.config.schemes.iter().zip(&r.weights) {
            let path = dir.join(format!("pan_weights_{}_{}.csv", scheme.as_str(), r.index));
            write_weights(weights, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PanConfig {
        let mut cfg = PanConfig::default();
        cfg.environment.users = 20;
        cfg.environment.items = 40;
        cfg.sim_steps = 6;
        cfg.train_steps = 4;
        cfg.test_per_user = 5;
        cfg.replications = 2;
        cfg.model.k = 4;
        cfg.model.epochs = 3;
        cfg
    }

    #[test]
    fn test_items_were_never_exposed() {
        let cfg = small();
        let data = simulate_pan(&cfg, 3).unwrap();
        assert_eq!(data.train.horizon(), 4);
        assert_eq!(data.full.horizon(), 6);
        assert_eq!(data.test.len(), 20 * 5);
        for &(u, i, r) in data.test.triples() {
            assert!(!data.full.is_consumed(u, i));
            assert!(r > 0.0 && r < 1.0);
        }
    }

    #[test]
    fn naive_weights_are_all_one() {
        let cfg = small();
        let data = simulate_pan(&cfg, 4).unwrap();
        let w = scheme_weights(&cfg, PanScheme::Naive, &data.train).unwrap();
        assert!(w.entries().iter().all(|e| e.weight == 1.0));
        assert_eq!(w.len(), 20 * 4);
    }

    #[test]
    fn capacity_checked() {
        let mut cfg = small();
        cfg.test_per_user = 35;
        assert!(cfg.validate().is_err());
    }
}
