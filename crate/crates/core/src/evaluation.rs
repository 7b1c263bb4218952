//! Predictive metrics and upcrossing counts.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mcmc::{Chain, Regressor};
use crate::network::log_normal_pdf;

/// Mean over test points of `log (1/S) sum_s N(y | f_s(x), noise_var)`.
pub fn test_log_likelihood<S: Regressor>(chain: &Chain<S>, test: &Dataset, noise_var: f64) -> f64 {
    log_predictive_density(&chain.predictions(&test.x), &test.y, noise_var)
}

/// Same as [`test_log_likelihood`] from a `samples x points` prediction matrix.
pub fn log_predictive_density(preds: &[Vec<f64>], y: &[f64], noise_var: f64) -> f64 {
    assert!(!preds.is_empty() && !y.is_empty(), "need samples and test points");
    let ln_s = (preds.len() as f64).ln();
    let total: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let terms: Vec<f64> = preds.iter().map(|p| log_normal_pdf(yi, p[i], noise_var)).collect();
            log_sum_exp(&terms) - ln_s
        })
        .sum();
    total / y.len() as f64
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Root mean squared error of the posterior mean prediction.
pub fn rmse<S: Regressor>(chain: &Chain<S>, test: &Dataset) -> f64 {
    rmse_of_mean(&chain.predictions(&test.x), &test.y)
}

pub fn rmse_of_mean(preds: &[Vec<f64>], y: &[f64]) -> f64 {
    let s = preds.len() as f64;
    let sq: f64 = y
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let mean = preds.iter().map(|p| p[i]).sum::<f64>() / s;
            (yi - mean).powi(2)
        })
        .sum();
    (sq / y.len() as f64).sqrt()
}

/// Indices `i` with `values[i] <= level < values[i + 1]`.
pub fn count_upcrossings(values: &[f64], level: f64) -> usize {
    values.windows(2).filter(|w| w[0] <= level && w[1] > level).count()
}

/// Indices `i` with `values[i] > level >= values[i + 1]`.
pub fn count_downcrossings(values: &[f64], level: f64) -> usize {
    values.windows(2).filter(|w| w[0] > level && w[1] <= level).count()
}

pub fn mean_upcrossings(functions: &[Vec<f64>], level: f64) -> f64 {
    functions
        .iter()
        .map(|f| count_upcrossings(f, level) as f64)
        .sum::<f64>()
        / functions.len() as f64
}

/// Bisection on `log theta` in `[lo, hi]` for the value whose mean prior
/// upcrossings (`upcrossings_at`, increasing in theta) match `target`
/// within relative tolerance `rel_tol`. `upcrossings_at` should use common
/// random numbers across calls so the search sees a deterministic curve.
pub fn match_prior_upcrossings(
    target: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    mut upcrossings_at: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let no_bracket = || Error::NoBracket {
        name: "upcrossing match",
        lo,
        hi,
    };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let ga = upcrossings_at(lo)? - target;
    let gb = upcrossings_at(hi)? - target;
    if ga.abs() <= rel_tol * target {
        return Ok(lo);
    }
    if gb.abs() <= rel_tol * target {
        return Ok(hi);
    }
    if ga > 0.0 || gb < 0.0 {
        return Err(no_bracket());
    }
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        let g = upcrossings_at(mid.exp())? - target;
        if g.abs() <= rel_tol * target {
            return Ok(mid.exp());
        }
        if g < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Summary written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub model: String,
    pub llh_mean: f64,
    pub llh_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub n_splits: usize,
    pub seed: u64,
}

impl MetricsReport {
    /// Pool per-split values; the spread is the sample standard deviation
    /// (zero for a single split).
    pub fn from_splits(dataset: &str, model: &str, llh: &[f64], rmse: &[f64], seed: u64) -> Self {
        let sd = |v: &[f64]| {
            if v.len() > 1 {
                crate::stats::variance(v).sqrt()
            } else {
                0.0
            }
        };
        MetricsReport {
            dataset: dataset.to_string(),
            model: model.to_string(),
            llh_mean: crate::stats::mean(llh),
            llh_std: sd(llh),
            rmse_mean: crate::stats::mean(rmse),
            rmse_std: sd(rmse),
            n_splits: llh.len(),
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::linspace;
    use proptest::prelude::*;

    #[test]
    fn log_likelihood_examples() {
        let var = 1.0 / (2.0 * std::f64::consts::PI);
        assert!(log_predictive_density(&[vec![0.3, -1.0]], &[0.3, -1.0], var).abs() < 1e-14);
        let preds = vec![vec![0.0, 1.0], vec![0.5, 0.2], vec![-0.4, 0.9]];
        let dup: Vec<Vec<f64>> = preds.iter().chain(&preds).cloned().collect();
        let y = [0.1, 0.7];
        let a = log_predictive_density(&preds, &y, 0.3);
        assert!((a - log_predictive_density(&dup, &y, 0.3)).abs() < 1e-14);
        assert!(log_predictive_density(&[vec![0.0]], &[1e6], 1e-4).is_finite());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse_of_mean(&[vec![1.0, 2.0]], &[1.0, 2.0]), 0.0);
        let y = [1.0, -1.0, 0.5, -0.5];
        let r = rmse_of_mean(&[vec![0.0; 4]], &y);
        let sd = (y.iter().map(|v| v * v).sum::<f64>() / 4.0).sqrt();
        assert!((r - sd).abs() < 1e-15);
    }

    #[test]
    fn upcrossing_examples() {
        assert_eq!(count_upcrossings(&[1.0; 10], 0.0), 0);
        let line: Vec<f64> = linspace(0.0, 1.0, 101).iter().map(|x| x - 0.5).collect();
        assert_eq!(count_upcrossings(&line, 0.0), 1);
        let sine: Vec<f64> = linspace(0.0, 2.0, 1000)
            .iter()
            .map(|x| (2.0 * std::f64::consts::PI * x).sin())
            .collect();
        // Starting exactly on the level counts: sin is 0 at x = 0 and rises.
        assert_eq!(count_upcrossings(&sine, 0.0), 2);
        assert_eq!(count_upcrossings(&sine[1..], 0.0), 1);
        assert_eq!(count_upcrossings(&[0.5], 0.0), 0);
        assert_eq!(count_upcrossings(&[], 0.0), 0);
    }

    #[test]
    fn matching_a_curve_to_itself_recovers_the_parameter() {
        let curve = |t: f64| Ok(3.0 * t.sqrt());
        let target = curve(2.0).unwrap();
        let found = match_prior_upcrossings(target, 0.01, 100.0, 1e-3, curve).unwrap();
        assert!((found / 2.0 - 1.0).abs() < 3e-3);
        assert!(matches!(
            match_prior_upcrossings(1e6, 0.01, 100.0, 0.05, curve),
            Err(Error::NoBracket { .. })
        ));
    }

    proptest! {
        #[test]
        fn up_and_down_crossings_alternate(v in prop::collection::vec(-3.0f64..3.0, 0..60), level in -1.0f64..1.0) {
            let up = count_upcrossings(&v, level) as i64;
            let down = count_downcrossings(&v, level) as i64;
            prop_assert!((up - down).abs() <= 1);
        }

        #[test]
        fn rmse_is_nonnegative(p in prop::collection::vec(-5.0f64..5.0, 1..20), shift in -1.0f64..1.0) {
            let y: Vec<f64> = p.iter().map(|v| v + shift).collect();
            let r = rmse_of_mean(std::slice::from_ref(&p), &y);
            prop_assert!(r >= 0.0);
            prop_assert!((r - shift.abs()).abs() < 1e-12);
        }

        #[test]
        fn log_likelihood_is_finite(p in prop::collection::vec(-50.0f64..50.0, 1..5), y in -50.0f64..50.0) {
            let preds: Vec<Vec<f64>> = p.iter().map(|v| vec![*v]).collect();
            prop_assert!(log_predictive_density(&preds, &[y], 0.01).is_finite());
        }
    }
}
