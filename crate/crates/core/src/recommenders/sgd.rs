//! Weighted matrix factorization by minibatch Adam.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::{weighted_objective, MFConfig, TrainingData};
use crate::error::{Error, Result};
use crate::estimators::WeightAssignment;
use crate::history::{InteractionHistory, LatentParams};
use crate::rng::{streams, SeededRng};

/// User and item vectors both `N(0, init²)`.
pub fn sgd_init(data: &TrainingData, cfg: &MFConfig) -> Result<LatentParams> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed, streams::MODEL_INIT);
    let normal = Normal::new(0.0, cfg.init_scale())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let users = (0..data.users() * cfg.k).map(|_| normal.sample(&mut rng)).collect();
    let items = (0..data.items() * cfg.k).map(|_| normal.sample(&mut rng)).collect();
    LatentParams::new(cfg.k, users, items, cfg.noise_variance)
}

/// Gradient of the weighted objective over the entries in `batch`, with the
/// data term scaled by `scale`, plus the full ridge gradient.
fn batch_gradient(
    data: &TrainingData,
    params: &LatentParams,
    lambda: f64,
    batch: impl Iterator<Item = usize>,
    scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = params.dim();
    let mut gu: Vec<f64> = params.user_vectors().iter().map(|x| 2.0 * lambda * x).collect();
    let mut gi: Vec<f64> = params.item_vectors().iter().map(|x| 2.0 * lambda * x).collect();
    for n in batch {
        let e = &data.entries()[n];
        let resid = e.rating - params.predict(e.user, e.item);
        let c = -2.0 * scale * e.weight * resid;
        let (theta, beta) = (params.user(e.user), params.item(e.item));
        for d in 0..k {
            gu[e.user * k + d] += c * beta[d];
            gi[e.item * k + d] += c * theta[d];
        }
    }
    (gu, gi)
}

/// Full-batch gradient `(∂/∂Θ, ∂/∂B)` of `Σ w e² + λ(‖Θ‖² + ‖B‖²)`,
/// row-major like the parameter buffers.
pub fn sgd_gradient(data: &TrainingData, params: &LatentParams, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    batch_gradient(data, params, lambda, 0..data.len(), 1.0)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], cfg: &super::SgdConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for j in 0..x.len() {
            self.m[j] = cfg.beta1 * self.m[j] + (1.0 - cfg.beta1) * g[j];
            self.v[j] = cfg.beta2 * self.v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let mhat = self.m[j] / bc1;
            let vhat = self.v[j] / bc2;
            x[j] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// Minimize the weighted ridge objective with Adam on shuffled minibatches.
///
/// Minibatch data gradients are scaled by `n / B` so each step is an unbiased
/// estimate of the full gradient. The objective is checked after every
/// epoch; the best parameters seen (initialization included) are returned.
pub fn fit_weighted_sgd(
    history: &InteractionHistory,
    weights: &WeightAssignment,
    cfg: &MFConfig,
) -> Result<LatentParams> {
    let data = TrainingData::from_history(history, weights)?;
    fit_sgd_data(&data, cfg)
}

/// [`fit_weighted_sgd`] on prepared training data.
pub fn fit_sgd_data(data: &TrainingData, cfg: &MFConfig) -> Result<LatentParams> {
    let sgd = cfg.sgd;
    if sgd.batch_size == 0 || !(sgd.lr > 0.0) {
        return Err(Error::InvalidParameter("batch size and lr must be positive".into()));
    }
    let mut params = sgd_init(data, cfg)?;
    let initial = weighted_objective(data, &params, cfg.lambda);
    let mut best = (initial, params.clone());
    if data.is_empty() || sgd.epochs == 0 {
        return Ok(params);
    }
    let mut rng = SeededRng::new(cfg.seed, streams::MODEL_INIT + 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut adam_u = Adam::new(params.user_vectors().len());
    let mut adam_i = Adam::new(params.item_vectors().len());
    for _ in 0..sgd.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(sgd.batch_size) {
            let scale = data.len() as f64 / batch.len() as f64;
            let (gu, gi) = batch_gradient(data, &params, cfg.lambda, batch.iter().copied(), scale);
            let (u, i) = params.buffers_mut();
            adam_u.step(u, &gu, &sgd);
            adam_i.step(i, &gi, &sgd);
        }
        let obj = weighted_objective(data, &params, cfg.lambda);
        if !obj.is_finite() || obj > 10.0 * initial {
            return Err(Error::Diverged {
                objective: obj,
                initial,
            });
        }
        if obj < best.0 {
            best = (obj, params.clone());
        }
    }
    Ok(best.1)
}
