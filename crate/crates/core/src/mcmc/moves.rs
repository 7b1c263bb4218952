//! The individual transitions of the sampler.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::hmc::{hmc_step, HmcOutcome};
use crate::intensity::{refresh_scales, IntensityKind, IntensityModel};
use crate::network::{log_likelihood, Hyperparams, NetworkState};
use crate::posterior::NetworkTarget;

/// Step 1: joint HMC over bias, weights and centers at fixed width.
pub fn hmc_update<R: Rng + ?Sized>(
    state: &mut NetworkState,
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    leapfrog_steps: usize,
    step_size: f64,
    rng: &mut R,
) -> HmcOutcome {
    let target = NetworkTarget {
        data,
        hyper,
        intensity,
        width: state.width(),
    };
    let mut q = NetworkTarget::encode(state);
    let out = hmc_step(&target, &mut q, step_size, leapfrog_steps, rng);
    if out.accepted {
        *state = target.decode(&q);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Birth,
    Death,
    /// Death proposed with no units to remove.
    None,
}

/// Log acceptance ratio of adding a unit drawn from `lambda / Lambda` to a
/// width-`k` network.
pub fn log_birth_ratio(delta_loglik: f64, total_mass: f64, k: usize) -> f64 {
    delta_loglik + total_mass.ln() - ((k + 1) as f64).ln()
}

/// Log acceptance ratio of removing one of `k` units.
pub fn log_death_ratio(delta_loglik: f64, total_mass: f64, k: usize) -> f64 {
    delta_loglik + (k as f64).ln() - total_mass.ln()
}

fn gaussian_delta(y: &[f64], old: &[f64], shift: &[f64], noise_var: f64) -> f64 {
    y.iter()
        .zip(old)
        .zip(shift)
        .map(|((y, f), d)| {
            let r0 = y - f;
            let r1 = r0 - d;
            (r0 * r0 - r1 * r1) / (2.0 * noise_var)
        })
        .sum()
}

/// Step 2: one birth or death proposal with probability 1/2 each.
/// `preds` caches the network output at `data.x` and is kept in sync.
pub fn birth_death_update<R: Rng + ?Sized>(
    state: &mut NetworkState,
    preds: &mut [f64],
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    rng: &mut R,
) -> (MoveKind, bool) {
    let k = state.width();
    let mass = intensity.total_mass();
    if rng.random::<f64>() < 0.5 {
        let c = intensity.sample_location(rng);
        let s = hyper.scale_for(intensity.value(c));
        let w = Normal::new(0.0, hyper.weight_prior_var().sqrt())
            .expect("valid sd")
            .sample(rng);
        let shift: Vec<f64> = data.x.iter().map(|x| w * (-s * (x - c).powi(2)).exp()).collect();
        let log_a = log_birth_ratio(gaussian_delta(&data.y, preds, &shift, hyper.noise_var), mass, k);
        let accepted = accept(log_a, rng);
        if accepted {
            state.push_unit(w, c, s);
            preds.iter_mut().zip(&shift).for_each(|(p, d)| *p += d);
        }
        (MoveKind::Birth, accepted)
    } else {
        if k == 0 {
            return (MoveKind::None, false);
        }
        let j = rng.random_range(0..k);
        let shift: Vec<f64> = data.x.iter().map(|&x| -state.weights[j] * state.basis(j, x)).collect();
        let log_a = log_death_ratio(gaussian_delta(&data.y, preds, &shift, hyper.noise_var), mass, k);
        let accepted = accept(log_a, rng);
        if accepted {
            state.remove_unit(j);
            preds.iter_mut().zip(&shift).for_each(|(p, d)| *p += d);
        }
        (MoveKind::Death, accepted)
    }
}

/// Log density of `u = log lambda` under `lambda^2 ~ Gamma(alpha, beta)`,
/// the Poisson process over the current centers and the likelihood with
/// every scale set to `s0^2 lambda^2`.
pub fn log_level_target(state: &NetworkState, data: &Dataset, hyper: &Hyperparams, level: f64) -> f64 {
    let u = level.ln();
    let k = state.width() as f64;
    let prior = (hyper.gamma_alpha - 1.0) * 2.0 * u - hyper.gamma_beta * level * level + 2.0 * u;
    let pp = -level * hyper.region.length() + k * u;
    let mut st = state.clone();
    st.scales.iter_mut().for_each(|s| *s = hyper.scale_for(level));
    prior + pp + log_likelihood(&st, data, hyper.noise_var)
}

/// Random-walk MH on `log lambda` for a homogeneous intensity; scales follow
/// the accepted level.
pub fn level_update<R: Rng + ?Sized>(
    state: &mut NetworkState,
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &mut IntensityModel,
    step: f64,
    rng: &mut R,
) -> bool {
    let IntensityKind::Homogeneous { level } = intensity.kind else {
        panic!("level update needs a homogeneous intensity");
    };
    let z: f64 = StandardNormal.sample(rng);
    let proposal = level * (step * z).exp();
    let log_a = log_level_target(state, data, hyper, proposal) - log_level_target(state, data, hyper, level);
    let accepted = accept(log_a, rng);
    if accepted {
        intensity.kind = IntensityKind::Homogeneous { level: proposal };
        refresh_scales(state, hyper, intensity);
    }
    accepted
}

pub(crate) fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    assert!(!log_a.is_nan(), "NaN in Metropolis ratio");
    log_a >= 0.0 || rng.random::<f64>().ln() < log_a
}
