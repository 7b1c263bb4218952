//! Log full conditional of the network parameters and its analytic gradient.
//!
//! The target over `(b, w_1..w_K, c_1..c_K)` for fixed width and intensity is
//! the Gaussian likelihood times `N(b; 0, sigma_b^2)`, `N(w_k; 0, weight_prior_var)`
//! and the Poisson process density of the centers. Scales are not free: they
//! are recomputed as `s0^2 lambda(c_k)^2` from the centers on every call, so
//! the center gradient carries the chain-rule term through the intensity.

use crate::dataset::Dataset;
use crate::hmc::Target;
use crate::intensity::{log_pp_density, IntensityModel};
use crate::network::{log_normal_pdf, Hyperparams, NetworkState};

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
}

/// Log full conditional, using scales derived from the centers.
pub fn log_posterior(state: &NetworkState, data: &Dataset, hyper: &Hyperparams, intensity: &IntensityModel) -> f64 {
    value_and_gradient(state, data, hyper, intensity, false).0
}

/// Analytic gradient with respect to bias, weights and centers.
pub fn grad_log_posterior(
    state: &NetworkState,
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
) -> Gradient {
    value_and_gradient(state, data, hyper, intensity, true).1
}

pub fn value_and_gradient(
    state: &NetworkState,
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    want_grad: bool,
) -> (f64, Gradient) {
    let k = state.width();
    let wv = hyper.weight_prior_var();
    // Per-unit scale and d log lambda / dc at the current centers.
    let mut scales = Vec::with_capacity(k);
    let mut log_slopes = Vec::with_capacity(k);
    for &c in &state.centers {
        let lam = intensity.value(c);
        scales.push(hyper.scale_for(lam));
        log_slopes.push(intensity.log_value_and_slope(c).1);
    }

    let mut grad = Gradient {
        bias: -state.bias / hyper.sigma_b_sq,
        weights: state.weights.iter().map(|w| -w / wv).collect(),
        centers: log_slopes.clone(),
    };

    let mut value = log_pp_density(&state.centers, intensity)
        + log_normal_pdf(state.bias, 0.0, hyper.sigma_b_sq)
        + state.weights.iter().map(|&w| log_normal_pdf(w, 0.0, wv)).sum::<f64>();

    let mut basis = vec![0.0; k];
    for (&x, &y) in data.x.iter().zip(&data.y) {
        let mut f = state.bias;
        for j in 0..k {
            let d = x - state.centers[j];
            basis[j] = (-scales[j] * d * d).exp();
            f += state.weights[j] * basis[j];
        }
        let r = y - f;
        value += log_normal_pdf(y, f, hyper.noise_var);
        if !want_grad {
            continue;
        }
        let g = r / hyper.noise_var;
        grad.bias += g;
        for j in 0..k {
            let d = x - state.centers[j];
            grad.weights[j] += g * basis[j];
            // d/dc [-s^2(c) d^2] with d s^2/dc = 2 s^2 (log lambda)'.
            let dexp = scales[j] * (2.0 * d - 2.0 * d * d * log_slopes[j]);
            grad.centers[j] += g * state.weights[j] * basis[j] * dexp;
        }
    }
    (value, grad)
}

/// Flattened `[b, w_1..w_K, c_1..c_K]` view of the full conditional for HMC.
pub struct NetworkTarget<'a> {
    pub data: &'a Dataset,
    pub hyper: &'a Hyperparams,
    pub intensity: &'a IntensityModel,
    pub width: usize,
}

impl NetworkTarget<'_> {
    pub fn encode(state: &NetworkState) -> Vec<f64> {
        let mut q = Vec::with_capacity(1 + 2 * state.width());
        q.push(state.bias);
        q.extend(&state.weights);
        q.extend(&state.centers);
        q
    }

    /// Rebuild a state from `q`, recomputing scales from the intensity.
    pub fn decode(&self, q: &[f64]) -> NetworkState {
        let k = self.width;
        let centers = q[1 + k..1 + 2 * k].to_vec();
        let scales = centers
            .iter()
            .map(|&c| self.hyper.scale_for(self.intensity.value(c)))
            .collect();
        NetworkState {
            bias: q[0],
            weights: q[1..1 + k].to_vec(),
            centers,
            scales,
        }
    }
}

impl Target for NetworkTarget<'_> {
    fn dim(&self) -> usize {
        1 + 2 * self.width
    }

    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let state = self.decode(q);
        let (v, g) = value_and_gradient(&state, self.data, self.hyper, self.intensity, true);
        let k = self.width;
        grad[0] = g.bias;
        grad[1..1 + k].copy_from_slice(&g.weights);
        grad[1 + k..1 + 2 * k].copy_from_slice(&g.centers);
        v
    }

    fn log_density(&self, q: &[f64]) -> f64 {
        let state = self.decode(q);
        value_and_gradient(&state, self.data, self.hyper, self.intensity, false).0
    }

    fn in_support(&self, q: &[f64]) -> bool {
        q[1 + self.width..].iter().all(|&c| self.intensity.region.contains(c))
    }
}
