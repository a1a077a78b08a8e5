//! TOML experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use recloop_core::environments::{DirichletEnvConfig, LatentFactorEnvConfig};
use recloop_core::recommenders::{MFConfig, PolicyConfig, PolicyKind, SgdConfig};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Feedback,
    Cafl,
    Uniform,
    RandomShadow,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Feedback, Arm::Cafl, Arm::Uniform, Arm::RandomShadow];

    pub fn as_str(&self) -> &'static str {
        match self {
            Arm::Feedback => "feedback",
            Arm::Cafl => "cafl",
            Arm::Uniform => "uniform",
            Arm::RandomShadow => "random_shadow",
        }
    }

    /// Position in [`Arm::ALL`]; fixes the arm's rng streams.
    pub fn index(&self) -> u64 {
        Arm::ALL.iter().position(|a| a == self).unwrap() as u64
    }

    pub fn parse(s: &str) -> HarnessResult<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| HarnessError::Config(format!("unknown arm `{s}`")))
    }
}

impl std::fmt::Display for Arm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// `1.96 · sd / √n`
    #[default]
    Normal,
    /// Student-t quantile with `n − 1` degrees of freedom.
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Als,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub model: ModelKind,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub lambda: f64,
    pub sweeps: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub init_scale: Option<f64>,
    pub noise_variance: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let mf = MFConfig::default();
        Self {
            model: ModelKind::Als,
            k: mf.k,
            lambda: mf.lambda,
            sweeps: mf.als_sweeps,
            epochs: mf.sgd.epochs,
            lr: mf.sgd.lr,
            batch_size: mf.sgd.batch_size,
            init_scale: None,
            noise_variance: mf.noise_variance,
        }
    }
}

impl ModelSection {
    pub fn mf_config(&self, seed: u64) -> MFConfig {
        MFConfig {
            k: self.k,
            lambda: self.lambda,
            als_sweeps: self.sweeps,
            sgd: SgdConfig {
                lr: self.lr,
                epochs: self.epochs,
                batch_size: self.batch_size,
                ..Default::default()
            },
            init_scale: self.init_scale,
            noise_variance: self.noise_variance,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Uniform,
    #[default]
    Topn,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub policy: PolicyName,
    pub epsilon: f64,
    pub tau: f64,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    pub no_repeat: bool,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            policy: PolicyName::Topn,
            epsilon: 0.1,
            tau: 1.0,
            n: 1,
            no_repeat: true,
        }
    }
}

impl PolicySection {
    pub fn policy_config(&self) -> PolicyConfig {
        let kind = match self.policy {
            PolicyName::Uniform => PolicyKind::UniformRandom,
            PolicyName::Topn => PolicyKind::TopnEpsilon { epsilon: self.epsilon },
            PolicyName::Softmax => PolicyKind::Softmax { temperature: self.tau },
        };
        PolicyConfig {
            kind,
            n: self.n,
            no_repeat: self.no_repeat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Naive,
    Ipw,
    #[default]
    Cafl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CName {
    #[default]
    Formula,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    /// Weighting used by the `cafl` arm.
    pub estimator: EstimatorName,
    pub c: CName,
    /// Rescale weights to mean 1 before training.
    pub normalize: bool,
    /// Write the final-step weights of every arm next to the results.
    pub dump_weights: bool,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            estimator: EstimatorName::Cafl,
            c: CName::Formula,
            normalize: true,
            dump_weights: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanScheme {
    Naive,
    Popularity,
    Cafl,
}

impl PanScheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            PanScheme::Naive => "naive",
            PanScheme::Popularity => "popularity",
            PanScheme::Cafl => "cafl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanConfig {
    pub environment: DirichletEnvConfig,
    pub model: ModelSection,
    /// Exposure steps simulated per user.
    pub sim_steps: usize,
    /// Leading steps kept as training data.
    pub train_steps: usize,
    pub test_per_user: usize,
    pub replications: usize,
    pub schemes: Vec<PanScheme>,
    pub normalize: bool,
    pub dump_weights: bool,
}

impl Default for PanConfig {
    fn default() -> Self {
        Self {
            environment: DirichletEnvConfig::default(),
            // 200 epochs brings the weighted objective within 1% of its
            // long-run value at the default step size.
            model: ModelSection {
                model: ModelKind::Sgd,
                k: 16,
                epochs: 200,
                ..Default::default()
            },
            sim_steps: 30,
            train_steps: 20,
            test_per_user: 20,
            replications: 10,
            schemes: vec![PanScheme::Naive, PanScheme::Popularity, PanScheme::Cafl],
            normalize: true,
            dump_weights: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub horizon: usize,
    pub replications: usize,
    pub test_size: usize,
    pub arms: Vec<Arm>,
    pub ci: CiMethod,
    /// Steps between retrains; metrics are still reported every step.
    pub retrain_every: usize,
    /// Start each ALS fit from the previous parameters.
    pub warm_start: bool,
    pub environment: LatentFactorEnvConfig,
    pub model: ModelSection,
    pub policy: PolicySection,
    pub estimator: EstimatorSection,
    pub pan: PanConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 50,
            replications: 10,
            test_size: 1000,
            arms: Arm::ALL.to_vec(),
            ci: CiMethod::Normal,
            retrain_every: 1,
            warm_start: false,
            environment: LatentFactorEnvConfig::default(),
            // Best final-step RMSE of the uniform arm over λ ∈ [2, 12].
            model: ModelSection {
                lambda: 5.0,
                ..Default::default()
            },
            policy: PolicySection::default(),
            estimator: EstimatorSection::default(),
            pan: PanConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let (u, i) = (self.environment.users, self.environment.items);
        let n = self.policy.n;
        if self.horizon == 0 || self.replications == 0 || n == 0 {
            return bad("horizon, replications and N must be positive".into());
        }
        if self.retrain_every == 0 {
            return bad("retrain_every must be >= 1".into());
        }
        if self.arms.is_empty() {
            return bad("no arms configured".into());
        }
        let mut seen = self.arms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.arms.len() {
            return bad("arms listed twice".into());
        }
        if self.policy.no_repeat && self.horizon * n * u + self.test_size > u * i {
            return bad(format!(
                "T*N*U + test size = {} exceeds U*I = {}",
                self.horizon * n * u + self.test_size,
                u * i
            ));
        }
        if !self.policy.no_repeat && self.arms.contains(&Arm::Cafl) && self.estimator.estimator == EstimatorName::Cafl {
            return bad("the cafl estimator needs no_repeat = true".into());
        }
        if self.warm_start && self.model.model == ModelKind::Sgd {
            return bad("warm_start is only supported for the ALS model".into());
        }
        self.model.mf_config(self.seed).validate()?;
        Ok(())
    }
}
