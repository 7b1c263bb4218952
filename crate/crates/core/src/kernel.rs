//! Prior covariance of the network output: closed forms for a homogeneous
//! intensity, the stationary large-region limit, the Gaussian-center RBF
//! kernel for comparison, and Monte Carlo estimates for everything else.

use rand::{Rng, RngExt};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::intensity::{sample_prior_network, IntensityModel};
use crate::network::Hyperparams;
use crate::stats::normal_cdf;

/// `Phi(a) - Phi(b)` for `a >= b`, evaluated on whichever tail keeps precision.
fn normal_mass(b: f64, a: f64) -> f64 {
    if a + b > 0.0 {
        normal_cdf(-b) - normal_cdf(-a)
    } else {
        normal_cdf(a) - normal_cdf(b)
    }
}

/// Exact prior covariance for a constant intensity `lambda` on `hyper.region`:
/// `sigma_b^2 + sigma_w^2 exp(-2 s0^2 lambda^2 ((x1-x2)/2)^2) [Phi(u1) - Phi(u0)]`
/// with `u_i = 2 s0 lambda (C_i - x_m)` and `x_m` the midpoint.
pub fn cov_homogeneous(x1: f64, x2: f64, hyper: &Hyperparams, lambda: f64) -> f64 {
    let s = hyper.s0_sq.sqrt() * lambda;
    let half_gap = 0.5 * (x1 - x2);
    let xm = 0.5 * (x1 + x2);
    let k = 2.0 * s;
    let mass = normal_mass((hyper.region.lo - xm) * k, (hyper.region.hi - xm) * k);
    hyper.sigma_b_sq + hyper.sigma_w_sq * (-2.0 * s * s * half_gap * half_gap).exp() * mass
}

/// Large-region limit of [`cov_homogeneous`]: a squared-exponential kernel
/// whose amplitude does not depend on `lambda`.
pub fn cov_asymptotic(x1: f64, x2: f64, hyper: &Hyperparams, lambda: f64) -> f64 {
    let half_gap = 0.5 * (x1 - x2);
    hyper.sigma_b_sq + hyper.sigma_w_sq * (-2.0 * hyper.s0_sq * lambda * lambda * half_gap * half_gap).exp()
}

/// Covariance of an RBF network with `N(0, sigma_c^2)` centers and fixed
/// scale `1 / (2 sigma_s^2)`, up to `amplitude`: a stationary factor times a
/// factor decaying away from the origin.
pub fn cov_williams(x1: f64, x2: f64, sigma_c_sq: f64, sigma_s_sq: f64, amplitude: f64) -> f64 {
    let d = x1 - x2;
    let stationary = (-d * d / (2.0 * (2.0 * sigma_s_sq + sigma_s_sq * sigma_s_sq / sigma_c_sq))).exp();
    let nonstationary = (-(x1 * x1 + x2 * x2) / (2.0 * (2.0 * sigma_c_sq + sigma_s_sq))).exp();
    amplitude * stationary * nonstationary
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Number of independent random streams Monte Carlo work is split across.
/// Fixed so results do not depend on the thread count.
const SHARDS: u64 = 16;

/// Values of `n` independent prior functions at `points`, row per sample.
/// Shards run in parallel on sub-streams of a seed drawn from `rng`.
pub fn prior_function_samples<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    points: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let seed: u64 = rng.random();
    let per = n.div_ceil(SHARDS as usize);
    let shards: Vec<Result<Vec<Vec<f64>>>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut local = crate::rng_from_seed(seed, shard);
            let start = shard as usize * per;
            let count = per.min(n.saturating_sub(start));
            (0..count)
                .map(|_| {
                    let net = sample_prior_network(hyper, intensity, &mut local)?;
                    Ok(net.forward_many(points))
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    for s in shards {
        out.extend(s?);
    }
    Ok(out)
}

/// Sample covariance of paired draws with a delete-one jackknife standard error.
pub fn covariance_with_jackknife(a: &[f64], b: &[f64]) -> CovEstimate {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let comoment: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let estimate = comoment / (n - 1.0);
    // Leaving out point i changes the co-moment by n/(n-1) d_i e_i.
    let loo: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| (comoment - n / (n - 1.0) * (x - ma) * (y - mb)) / (n - 2.0))
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / n;
    let jack_var = (n - 1.0) / n * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();
    CovEstimate {
        estimate,
        std_error: jack_var.sqrt(),
    }
}

/// Monte Carlo estimate of `Cov(f(x1), f(x2))` over `n_samples` prior networks.
pub fn empirical_cov<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    x1: f64,
    x2: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<CovEstimate> {
    assert!(n_samples >= 3, "need at least three samples");
    let rows = prior_function_samples(hyper, intensity, &[x1, x2], n_samples, rng)?;
    let a: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let b: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    Ok(covariance_with_jackknife(&a, &b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovSource {
    Analytic,
    Mc,
}

impl CovSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovSource::Analytic => "analytic",
            CovSource::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariogramRow {
    pub x: f64,
    pub gap: f64,
    pub cov: f64,
    pub source: CovSource,
    pub std_error: f64,
}

/// `Cov(x - h/2, x + h/2)` from the closed form, for every `x` in `grid` and `h` in `gaps`.
pub fn variogram_analytic(hyper: &Hyperparams, lambda: f64, gaps: &[f64], grid: &[f64]) -> Vec<VariogramRow> {
    let mut rows = Vec::with_capacity(gaps.len() * grid.len());
    for &gap in gaps {
        for &x in grid {
            rows.push(VariogramRow {
                x,
                gap,
                cov: cov_homogeneous(x - 0.5 * gap, x + 0.5 * gap, hyper, lambda),
                source: CovSource::Analytic,
                std_error: 0.0,
            });
        }
    }
    rows
}

/// Monte Carlo variogram from one shared set of `n_samples` prior functions.
pub fn variogram_mc<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    gaps: &[f64],
    grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<VariogramRow>> {
    let mut points = Vec::with_capacity(2 * gaps.len() * grid.len());
    for &gap in gaps {
        for &x in grid {
            points.push(x - 0.5 * gap);
            points.push(x + 0.5 * gap);
        }
    }
    let samples = prior_function_samples(hyper, intensity, &points, n_samples, rng)?;
    let mut rows = Vec::with_capacity(gaps.len() * grid.len());
    let mut idx = 0;
    for &gap in gaps {
        for &x in grid {
            let a: Vec<f64> = samples.iter().map(|r| r[idx]).collect();
            let b: Vec<f64> = samples.iter().map(|r| r[idx + 1]).collect();
            let est = covariance_with_jackknife(&a, &b);
            rows.push(VariogramRow {
                x,
                gap,
                cov: est.estimate,
                source: CovSource::Mc,
                std_error: est.std_error,
            });
            idx += 2;
        }
    }
    Ok(rows)
}

/// Closed form when the intensity is constant, Monte Carlo otherwise.
pub fn variogram<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    gaps: &[f64],
    grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<VariogramRow>> {
    match intensity.kind {
        crate::intensity::IntensityKind::Homogeneous { level } => {
            let mut h = hyper.clone();
            h.region = intensity.region;
            Ok(variogram_analytic(&h, level, gaps, grid))
        }
        _ => variogram_mc(hyper, intensity, gaps, grid, n_samples, rng),
    }
}

/// Same table for the Gaussian-center RBF kernel.
pub fn variogram_williams(
    sigma_c_sq: f64,
    sigma_s_sq: f64,
    amplitude: f64,
    gaps: &[f64],
    grid: &[f64],
) -> Vec<VariogramRow> {
    let mut rows = Vec::new();
    for &gap in gaps {
        for &x in grid {
            rows.push(VariogramRow {
                x,
                gap,
                cov: cov_williams(x - 0.5 * gap, x + 0.5 * gap, sigma_c_sq, sigma_s_sq, amplitude),
                source: CovSource::Analytic,
                std_error: 0.0,
            });
        }
    }
    rows
}
