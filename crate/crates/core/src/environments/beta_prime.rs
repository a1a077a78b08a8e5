use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which shape parameterization to use for the mean-parameterized Beta.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPrimeMode {
    /// `a = ((1 - μ)/σ² - 1/μ) μ`, `b = a (1/μ - 1)`. Mean is exactly μ but
    /// the variance is not σ² (Beta(24, 24) at μ = 0.5, σ² = 0.01 has
    /// variance ≈ 0.0051).
    #[default]
    PaperLiteral,
    /// Method-of-moments shapes whose mean is μ and variance is σ².
    MomentExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrimeSpec {
    pub variance: f64,
    #[serde(default)]
    pub mode: BetaPrimeMode,
}

impl Default for BetaPrimeSpec {
    fn default() -> Self {
        Self {
            variance: 0.01,
            mode: BetaPrimeMode::PaperLiteral,
        }
    }
}

/// Shape parameters `(a, b)` of the Beta distribution with mean `mu`.
pub fn beta_prime_params(mu: f64, sigma2: f64, mode: BetaPrimeMode) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::InvalidParameter(format!("mean must lie in (0, 1), got {mu}")));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidParameter(format!("variance must be positive, got {sigma2}")));
    }
    let (a, b) = match mode {
        BetaPrimeMode::PaperLiteral => {
            let a = ((1.0 - mu) / sigma2 - 1.0 / mu) * mu;
            (a, a * (1.0 / mu - 1.0))
        }
        BetaPrimeMode::MomentExact => {
            let k = mu * (1.0 - mu) / sigma2 - 1.0;
            (mu * k, (1.0 - mu) * k)
        }
    };
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::VarianceTooLarge { mu, sigma2, a, b });
    }
    Ok((a, b))
}

impl BetaPrimeSpec {
    pub fn params(&self, mu: f64) -> Result<(f64, f64)> {
        beta_prime_params(mu, self.variance, self.mode)
    }

    /// Interval of means whose shapes are both at least `min_shape`.
    /// Means outside it are clamped before sampling so draws stay well inside (0, 1).
    pub fn admissible_means(&self, min_shape: f64) -> Result<(f64, f64)> {
        let ok = |mu: f64| {
            self.params(mu)
                .map(|(a, b)| a.min(b) >= min_shape)
                .unwrap_or(false)
        };
        if !ok(0.5) {
            return Err(Error::VarianceTooLarge {
                mu: 0.5,
                sigma2: self.variance,
                a: f64::NAN,
                b: f64::NAN,
            });
        }
        let bisect = |mut bad: f64, mut good: f64| {
            for _ in 0..200 {
                let mid = 0.5 * (bad + good);
                if ok(mid) {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            good
        };
        Ok((bisect(0.0, 0.5), bisect(1.0, 0.5)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn literal_examples() {
        let (a, b) = beta_prime_params(0.5, 0.01, BetaPrimeMode::PaperLiteral).unwrap();
        assert!(close(a, 24.0) && close(b, 24.0));
        let (a, b) = beta_prime_params(0.2, 0.01, BetaPrimeMode::PaperLiteral).unwrap();
        assert!(close(a, 15.0) && close(b, 60.0));
        assert!(close(a / (a + b), 0.2));
    }

    #[test]
    fn variance_too_large() {
        let err = beta_prime_params(0.5, 0.5, BetaPrimeMode::PaperLiteral).unwrap_err();
        assert!(matches!(err, Error::VarianceTooLarge { .. }));
        assert!(err.to_string().contains("variance"));
    }

    #[test]
    fn literal_variance_differs_from_target() {
        let (a, b) = beta_prime_params(0.5, 0.01, BetaPrimeMode::PaperLiteral).unwrap();
        let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
        assert!((var - 0.25 / 49.0).abs() < 1e-15);
        assert!((var - 0.01).abs() > 1e-3);
    }

    #[test]
    fn admissible_interval_brackets_feasible_means() {
        let spec = BetaPrimeSpec::default();
        let (lo, hi) = spec.admissible_means(1.0).unwrap();
        // a = μ(1-μ)/σ² - 1 >= 1 fixes lo; b = a(1-μ)/μ >= 1 fixes hi.
        let lo_exact = 0.5 - (0.25f64 - 0.02).sqrt();
        assert!((lo - lo_exact).abs() < 1e-9, "lo = {lo}");
        let b_at = |mu: f64| (mu * (1.0 - mu) / 0.01 - 1.0) * (1.0 - mu) / mu;
        assert!(b_at(hi) >= 1.0 - 1e-9 && b_at(hi + 1e-6) < 1.0, "hi = {hi}");
        let (a, b) = spec.params(lo).unwrap();
        assert!(a.min(b) >= 1.0 - 1e-9);
        assert!(BetaPrimeSpec { variance: 0.3, ..spec }.admissible_means(1.0).is_err());
    }
}
