//! Weighted alternating least squares.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Entry, MFConfig, TrainingData};
use crate::error::{Error, Result};
use crate::estimators::WeightAssignment;
use crate::history::{InteractionHistory, LatentParams};
use crate::rng::{streams, SeededRng};

/// User vectors zero, item vectors `N(0, init²)`.
pub fn als_init(data: &TrainingData, cfg: &MFConfig) -> Result<LatentParams> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed, streams::MODEL_INIT);
    let normal = Normal::new(0.0, cfg.init_scale())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let items = (0..data.items() * cfg.k).map(|_| normal.sample(&mut rng)).collect();
    LatentParams::new(cfg.k, vec![0.0; data.users() * cfg.k], items, cfg.noise_variance)
}

/// Minimizer of `Σ w (r − xᵀv)² + λ‖x‖²` over `x`.
fn solve_row<'a>(
    k: usize,
    lambda: f64,
    entries: impl Iterator<Item = (&'a Entry, &'a [f64])>,
    label: impl Fn() -> String,
) -> Result<Vec<f64>> {
    let mut a = DMatrix::<f64>::identity(k, k) * lambda;
    let mut b = DVector::<f64>::zeros(k);
    let mut count = 0usize;
    for (e, v) in entries {
        count += 1;
        for r in 0..k {
            b[r] += e.weight * e.rating * v[r];
            for c in 0..k {
                a[(r, c)] += e.weight * v[r] * v[c];
            }
        }
    }
    if lambda == 0.0 && count < k {
        return Err(Error::IncreaseRegularization(format!(
            "{} with {count} observations and K = {k}",
            label()
        )));
    }
    if count == 0 {
        return Ok(vec![0.0; k]);
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::IncreaseRegularization(label()))?;
    let x = chol.solve(&b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::IncreaseRegularization(label()));
    }
    Ok(x.iter().copied().collect())
}

/// Re-solve every user vector with the item vectors fixed.
pub fn als_half_sweep_users(data: &TrainingData, params: &mut LatentParams, lambda: f64) -> Result<()> {
    let k = params.dim();
    let solved = (0..data.users())
        .into_par_iter()
        .map(|u| {
            solve_row(
                k,
                lambda,
                data.user_entries(u).map(|e| (e, params.item(e.item))),
                || format!("user {u}"),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for (u, x) in solved.into_iter().enumerate() {
        params.user_mut(u).copy_from_slice(&x);
    }
    Ok(())
}

/// Re-solve every item vector with the user vectors fixed.
pub fn als_half_sweep_items(data: &TrainingData, params: &mut LatentParams, lambda: f64) -> Result<()> {
    let k = params.dim();
    let solved = (0..data.items())
        .into_par_iter()
        .map(|i| {
            solve_row(
                k,
                lambda,
                data.item_entries(i).map(|e| (e, params.user(e.user))),
                || format!("item {i}"),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, x) in solved.into_iter().enumerate() {
        params.item_mut(i).copy_from_slice(&x);
    }
    Ok(())
}

/// `cfg.als_sweeps` sweeps of users-then-items on the weighted ridge objective.
pub fn fit_weighted_als(
    history: &InteractionHistory,
    weights: &WeightAssignment,
    cfg: &MFConfig,
) -> Result<LatentParams> {
    let data = TrainingData::from_history(history, weights)?;
    fit_als_data(&data, cfg)
}

/// [`fit_weighted_als`] on prepared training data.
pub fn fit_als_data(data: &TrainingData, cfg: &MFConfig) -> Result<LatentParams> {
    fit_als_from(data, cfg, als_init(data, cfg)?)
}

/// ALS sweeps starting from `init` instead of a fresh draw.
pub fn fit_als_from(data: &TrainingData, cfg: &MFConfig, init: LatentParams) -> Result<LatentParams> {
    cfg.validate()?;
    if (init.users(), init.items(), init.dim()) != (data.users(), data.items(), cfg.k) {
        return Err(Error::DimensionMismatch {
            expected_users: data.users(),
            expected_items: data.items(),
            users: init.users(),
            items: init.items(),
        });
    }
    let mut params = init;
    for _ in 0..cfg.als_sweeps {
        als_half_sweep_users(data, &mut params, cfg.lambda)?;
        als_half_sweep_items(data, &mut params, cfg.lambda)?;
    }
    Ok(params)
}
