//! RBF network state, hyperparameters and the Gaussian observation model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{require_positive, Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Closed interval `[lo, hi]` carrying the Poisson process over centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: f64,
    pub hi: f64,
}

impl Region {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Region { lo, hi })
        } else {
            Err(Error::InvalidParameter {
                name: "region",
                reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
            })
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, c: f64) -> bool {
        c >= self.lo && c <= self.hi
    }

    /// The span `[x_min, x_max]` widened on each side by two prior
    /// lengthscales `1 / (s0 lambda)`, so units can sit just outside the data.
    pub fn around(x_min: f64, x_max: f64, s0_sq: f64, lambda: f64) -> Result<Self> {
        let margin = 2.0 / (s0_sq.sqrt() * lambda);
        Region::new(x_min - margin, x_max + margin)
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        linspace(self.lo, self.hi, n)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| lo + step * i as f64).collect()
        }
    }
}

/// Prior and likelihood hyperparameters.
///
/// `sigma_w_sq` is the amplitude contributed by the hidden units; the
/// per-weight prior variance is derived from it by [`Hyperparams::weight_prior_var`]
/// so that the prior pointwise variance is `sigma_b_sq + sigma_w_sq`
/// regardless of the intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub s0_sq: f64,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub noise_var: f64,
    pub region: Region,
    pub gamma_alpha: f64,
    pub gamma_beta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            s0_sq: 1.0,
            sigma_w_sq: 1.0,
            sigma_b_sq: 1.0,
            noise_var: 0.01,
            region: Region { lo: -5.0, hi: 5.0 },
            gamma_alpha: 1.0,
            gamma_beta: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        require_positive("s0_sq", self.s0_sq)?;
        require_positive("sigma_w_sq", self.sigma_w_sq)?;
        require_positive("sigma_b_sq", self.sigma_b_sq)?;
        require_positive("noise_var", self.noise_var)?;
        require_positive("gamma_alpha", self.gamma_alpha)?;
        require_positive("gamma_beta", self.gamma_beta)?;
        Region::new(self.region.lo, self.region.hi)?;
        Ok(())
    }

    /// Prior variance of each hidden-to-output weight, `sqrt(2 s0^2 / pi) * sigma_w^2`.
    /// With basis `exp(-s^2 (x-c)^2)` this puts the prior variance of `f`
    /// at `sigma_b^2 + sigma_w^2` away from the region edges, whatever the intensity.
    pub fn weight_prior_var(&self) -> f64 {
        (2.0 * self.s0_sq / PI).sqrt() * self.sigma_w_sq
    }

    /// Squared inverse width of a unit sitting where the intensity is `level`.
    pub fn scale_for(&self, level: f64) -> f64 {
        self.s0_sq * level * level
    }
}

/// Parameters of an RBF network of width `K`.
///
/// `scales[k]` holds the squared inverse lengthscale `s_k^2`. It is never a
/// free parameter: samplers recompute it from the intensity at `centers[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl NetworkState {
    pub fn empty(bias: f64) -> Self {
        NetworkState {
            bias,
            weights: Vec::new(),
            centers: Vec::new(),
            scales: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn push_unit(&mut self, weight: f64, center: f64, scale: f64) {
        self.weights.push(weight);
        self.centers.push(center);
        self.scales.push(scale);
    }

    /// Remove unit `k`, returning `(weight, center, scale)`. Order of the
    /// remaining units is preserved.
    pub fn remove_unit(&mut self, k: usize) -> (f64, f64, f64) {
        (self.weights.remove(k), self.centers.remove(k), self.scales.remove(k))
    }

    /// Output of hidden unit `k` at `x`.
    #[inline]
    pub fn basis(&self, k: usize, x: f64) -> f64 {
        let d = x - self.centers[k];
        (-self.scales[k] * d * d).exp()
    }

    /// `b + sum_k w_k exp(-s_k^2 (x - c_k)^2)`.
    pub fn forward(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.centers)
            .zip(&self.scales)
            .fold(self.bias, |acc, ((w, c), s)| {
                let d = x - c;
                acc + w * (-s * d * d).exp()
            })
    }

    pub fn forward_many(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.forward(x)).collect()
    }

    pub fn check_invariants(&self, region: &Region) -> Result<()> {
        let k = self.weights.len();
        if self.centers.len() != k || self.scales.len() != k {
            return Err(Error::InvalidState(format!(
                "length mismatch: {} weights, {} centers, {} scales",
                k,
                self.centers.len(),
                self.scales.len()
            )));
        }
        if let Some(s) = self.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidState(format!("non-positive scale {s}")));
        }
        if let Some(c) = self.centers.iter().find(|c| !region.contains(**c)) {
            return Err(Error::InvalidState(format!(
                "center {c} outside region [{}, {}]",
                region.lo, region.hi
            )));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidState("non-finite weight or bias".into()));
        }
        Ok(())
    }
}

/// Gaussian log density of `x` under `N(mean, var)`.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * r * r / var
}

/// Sum of Gaussian residual log densities over the dataset. Empty data gives 0.
pub fn log_likelihood(state: &NetworkState, data: &Dataset, noise_var: f64) -> f64 {
    data.x
        .iter()
        .zip(&data.y)
        .map(|(&x, &y)| log_normal_pdf(y, state.forward(x), noise_var))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_around_data_adds_two_lengthscales() {
        let r = Region::around(0.0, 1.0, 4.0, 10.0).unwrap();
        assert!((r.lo + 0.1).abs() < 1e-15 && (r.hi - 1.1).abs() < 1e-15);
        assert!(Region::around(0.0, 1.0, 1.0, 0.0).is_err());
    }
    use proptest::prelude::*;

    fn one_unit(w: f64, c: f64, s: f64) -> NetworkState {
        let mut st = NetworkState::empty(0.0);
        st.push_unit(w, c, s);
        st
    }

    #[test]
    fn forward_examples() {
        assert_eq!(NetworkState::empty(0.5).forward(3.0), 0.5);
        assert_eq!(one_unit(1.0, 0.0, 1.0).forward(0.0), 1.0);
        let v = one_unit(2.0, 0.0, 1.0).forward(1.0);
        assert!((v - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.735759).abs() < 1e-6);
    }

    #[test]
    fn log_likelihood_examples() {
        let st = one_unit(1.0, 0.2, 3.0);
        assert_eq!(log_likelihood(&st, &Dataset::empty(), 1.0), 0.0);

        let x = 0.7;
        let at_mode = Dataset::from_xy(vec![x], vec![st.forward(x)]).unwrap();
        let ll = log_likelihood(&st, &at_mode, 1.0 / (2.0 * PI));
        assert!(ll.abs() < 1e-12, "{ll}");

        let off = Dataset::from_xy(vec![x], vec![st.forward(x) + 1.0]).unwrap();
        let ll = log_likelihood(&st, &off, 1.0);
        assert!((ll - (-0.5 * (2.0 * PI).ln() - 0.5)).abs() < 1e-12);
        assert!((ll + 1.418939).abs() < 1e-6);
    }

    #[test]
    fn invariants_catch_bad_states() {
        let region = Region::new(-1.0, 1.0).unwrap();
        assert!(one_unit(1.0, 0.0, 1.0).check_invariants(&region).is_ok());
        assert!(one_unit(1.0, 2.0, 1.0).check_invariants(&region).is_err());
        assert!(one_unit(1.0, 0.0, 0.0).check_invariants(&region).is_err());
        let mut st = one_unit(1.0, 0.0, 1.0);
        st.scales.clear();
        assert!(st.check_invariants(&region).is_err());
    }

    #[test]
    fn weight_prior_var_identity() {
        let h = Hyperparams {
            s0_sq: 4.0,
            sigma_w_sq: 3.0,
            ..Hyperparams::default()
        };
        assert!((h.weight_prior_var() - (8.0 / PI).sqrt() * 3.0).abs() < 1e-15);
    }

    fn arb_state() -> impl Strategy<Value = NetworkState> {
        (0usize..6).prop_flat_map(|k| {
            (
                -2.0..2.0f64,
                prop::collection::vec(-2.0..2.0f64, k),
                prop::collection::vec(-3.0..3.0f64, k),
                prop::collection::vec(0.1..5.0f64, k),
            )
                .prop_map(|(bias, weights, centers, scales)| NetworkState {
                    bias,
                    weights,
                    centers,
                    scales,
                })
        })
    }

    proptest! {
        #[test]
        fn forward_is_translation_covariant(st in arb_state(), x in -4.0..4.0f64, delta in -3.0..3.0f64) {
            let mut shifted = st.clone();
            shifted.centers.iter_mut().for_each(|c| *c += delta);
            let a = st.forward(x);
            let b = shifted.forward(x + delta);
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn forward_is_linear_in_weights(st in arb_state(), x in -4.0..4.0f64, alpha in -3.0..3.0f64) {
            let mut scaled = st.clone();
            scaled.weights.iter_mut().for_each(|w| *w *= alpha);
            let a = alpha * (st.forward(x) - st.bias);
            let b = scaled.forward(x) - scaled.bias;
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn likelihood_peaks_at_zero_residual(r in -3.0..3.0f64, var in 0.01..4.0f64) {
            prop_assert!(log_normal_pdf(r, 0.0, var) <= log_normal_pdf(0.0, 0.0, var));
        }
    }
}
