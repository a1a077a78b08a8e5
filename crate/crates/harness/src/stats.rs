//! Replication summaries and paired tests.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::CiMethod;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// 95% half-width of the mean; `None` below two values.
pub fn ci_halfwidth(xs: &[f64], method: CiMethod) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let z = match method {
        CiMethod::Normal => 1.96,
        CiMethod::T => StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975),
    };
    Some(z * sample_sd(xs) / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    /// Mean of `a − b`.
    pub mean_diff: f64,
    pub t: f64,
    /// One-sided p-value for the alternative `mean(a − b) < 0`.
    pub p_less: f64,
}

/// Paired t-test of `a` against `b` with alternative `a < b`.
pub fn paired_t_less(a: &[f64], b: &[f64]) -> PairedTest {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    assert!(a.len() >= 2, "paired test needs at least two pairs");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let se = sample_sd(&d) / n.sqrt();
    if se == 0.0 {
        let p = if m < 0.0 { 0.0 } else { 1.0 };
        return PairedTest { mean_diff: m, t: f64::NAN, p_less: p };
    }
    let t = m / se;
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    PairedTest { mean_diff: m, t, p_less: dist.cdf(t) }
}
