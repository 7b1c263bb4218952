//! Posterior predictive summaries over a chain.

use rayon::prelude::*;
use serde::Serialize;

use super::{Chain, Regressor};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictiveRow {
    pub x: f64,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
}

/// Predictive distribution of `y*` at each grid point: the equal-weight
/// mixture over samples of `N(f_s(x), noise_var)`. Quantiles are those of
/// the mixture itself, found by bisection on its CDF.
pub fn posterior_predictive<S: Regressor>(chain: &Chain<S>, grid: &[f64], noise_var: f64) -> Vec<PredictiveRow> {
    assert!(!chain.is_empty(), "empty chain");
    let preds = chain.predictions(grid);
    let sd_noise = noise_var.sqrt();
    grid.par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let fs: Vec<f64> = preds.iter().map(|p| p[i]).collect();
            let n = fs.len() as f64;
            let mean = fs.iter().sum::<f64>() / n;
            let spread = fs.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
            let cdf = |y: f64| fs.iter().map(|f| normal_cdf((y - f) / sd_noise)).sum::<f64>() / n;
            let lo = fs.iter().copied().fold(f64::INFINITY, f64::min) - 10.0 * sd_noise;
            let hi = fs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd_noise;
            PredictiveRow {
                x,
                mean,
                sd: (spread + noise_var).sqrt(),
                q05: bisect(&cdf, 0.05, lo, hi),
                q95: bisect(&cdf, 0.95, lo, hi),
            }
        })
        .collect()
}

fn bisect(cdf: &impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}
