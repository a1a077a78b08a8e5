//! Exhaustive-enumeration checks of the estimators on tiny worlds.

use std::time::{Duration, Instant};

use rand::Rng;

use recloop_core::estimators::oracle::{
    exact_causal_objective, expected_estimator_value, Estimator, FeedbackSoftmax, TinyWorld,
    UniformWithReplacement, MAX_HORIZON, MAX_PAIRS, MAX_SUPPORT,
};
use recloop_core::estimators::{compute_c, CaflOptions};
use recloop_core::rng::SeededRng;
use recloop_core::LatentParams;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} ({:.2?})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed
        )
    }
}

fn random_params(world: &TinyWorld, rng: &mut SeededRng) -> LatentParams {
    let k = 2;
    LatentParams::new(
        k,
        (0..world.users() * k).map(|_| rng.random_range(-1.5..1.5)).collect(),
        (0..world.items() * k).map(|_| rng.random_range(-1.5..1.5)).collect(),
        rng.random_range(0.5..2.0),
    )
    .expect("valid parameter shapes")
}

/// A random world with `U·I ≤ 6` and 2 or 3 rating values, plus a horizon
/// `t ≤ 3` with `t < U·I`.
pub fn random_instance(rng: &mut SeededRng) -> (TinyWorld, usize) {
    loop {
        let users = rng.random_range(1..=3);
        let items = rng.random_range(1..=MAX_PAIRS / users);
        let pairs = users * items;
        if pairs < 2 {
            continue;
        }
        let t = rng.random_range(1..=MAX_HORIZON.min(pairs - 1));
        let values = rng.random_range(2..=MAX_SUPPORT);
        let world = TinyWorld::random(users, items, values, rng).expect("within oracle limits");
        return (world, t);
    }
}

/// `Σ_s c_s = t` for `trials` random `(catalogue, t)`; returns the worst error.
pub fn c_telescoping(trials: usize, seed: u64) -> recloop_core::Result<f64> {
    let mut rng = SeededRng::new(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let catalogue = rng.random_range(2..100_000);
        let t = rng.random_range(1..catalogue.min(5_000));
        let c = compute_c(t, catalogue)?;
        worst = worst.max((c.sum() - t as f64).abs());
    }
    Ok(worst)
}

/// Worst `|E[L̂] − L|` over `instances` random tiny worlds.
///
/// CAFL runs under a no-repeat feedback policy, IPW under a with-replacement
/// feedback policy that gives every pair positive probability.
pub fn unbiasedness(estimator: Estimator, instances: usize, seed: u64) -> recloop_core::Result<f64> {
    let mut rng = SeededRng::new(seed, 0);
    let no_repeat = !matches!(estimator, Estimator::Ipw);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (world, t) = random_instance(&mut rng);
        let p = random_params(&world, &mut rng);
        let temperature = rng.random_range(0.3..2.0);
        let policy = FeedbackSoftmax::random(world.pairs(), temperature, no_repeat, &mut rng);
        let e = expected_estimator_value(estimator, &world, &policy, &p, t)?;
        let l = exact_causal_objective(&world, &p, t)?;
        worst = worst.max((e - l).abs());
    }
    Ok(worst)
}

/// Naive estimator on a two-item world where feedback concentrates on the
/// item the model already likes. Returns `(E[L̂_naive], L, E[L̂_naive] under
/// uniform exposure)`.
pub fn naive_bias_witness() -> recloop_core::Result<(f64, f64, f64)> {
    let world = TinyWorld::new(1, 2, vec![1.0, 5.0], vec![vec![0.5, 0.5], vec![0.9, 0.1]])?;
    let p = LatentParams::new(1, vec![1.0], vec![2.0, 2.0], 1.0)?;
    let policy = FeedbackSoftmax {
        affinity: vec![1.0, 0.0, 0.0, 1.0],
        temperature: 1.0,
        no_repeat: false,
    };
    let l = exact_causal_objective(&world, &p, 3)?;
    let naive = expected_estimator_value(Estimator::Naive, &world, &policy, &p, 3)?;
    let uniform = expected_estimator_value(Estimator::Naive, &world, &UniformWithReplacement, &p, 3)?;
    Ok((naive, l, uniform))
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (passed, detail) = f();
    Check {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn report(result: recloop_core::Result<f64>, tol: f64) -> (bool, String) {
    match result {
        Ok(err) => (err <= tol, format!("max error {err:.3e} (tol {tol:.0e})")),
        Err(e) => (false, e.to_string()),
    }
}

/// The full suite; `instances` tiny worlds per unbiasedness check.
pub fn run_suite(instances: usize, seed: u64) -> Vec<Check> {
    vec![
        timed("c_telescoping", || report(c_telescoping(1000, seed), 1e-9)),
        timed("cafl_unbiased", || {
            report(unbiasedness(Estimator::CaflSpecial(CaflOptions::default()), instances, seed), 1e-10)
        }),
        timed("cafl_general_unbiased", || {
            report(unbiasedness(Estimator::CaflGeneral(CaflOptions::default()), instances, seed + 1), 1e-10)
        }),
        timed("ipw_unbiased", || report(unbiasedness(Estimator::Ipw, instances, seed + 2), 1e-10)),
        timed("naive_biased", || match naive_bias_witness() {
            Ok((naive, l, _)) => {
                let gap = (naive - l).abs();
                (gap > 1e-3, format!("|E[naive] - L| = {gap:.4}"))
            }
            Err(e) => (false, e.to_string()),
        }),
    ]
}
