//! Hamiltonian Monte Carlo with an identity mass matrix.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

/// Differentiable log density over a flat parameter vector.
pub trait Target {
    fn dim(&self) -> usize;

    /// Returns `log p(q)` and writes its gradient into `grad`.
    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, q: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_and_grad(q, &mut g)
    }

    /// Whether `q` lies in the support. A `-inf` log density outside it is a
    /// boundary rejection; inside it, an overflow and so a divergence.
    fn in_support(&self, _q: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    /// Metropolis acceptance probability `min(1, exp(-dH))`; zero on rejection by support.
    pub accept_prob: f64,
    /// The trajectory hit a non-finite Hamiltonian. Large finite energy
    /// errors, such as a center crossing a jump in a piecewise-constant
    /// intensity, are ordinary rejections.
    pub divergent: bool,
    /// The trajectory left the support of the target (`log p = -inf`).
    pub out_of_support: bool,
    pub energy_error: f64,
}

/// `steps` leapfrog steps of size `eps`, updating `q`, `p`, `grad` and
/// `logp` in place. Stops early when the log density becomes non-finite;
/// the returned flag says whether all steps completed.
pub fn leapfrog<T: Target + ?Sized>(
    target: &T,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    logp: &mut f64,
    eps: f64,
    steps: usize,
) -> bool {
    for _ in 0..steps {
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * eps * gi;
        }
        for (qi, pi) in q.iter_mut().zip(p.iter()) {
            *qi += eps * pi;
        }
        *logp = target.log_density_and_grad(q, grad);
        if !logp.is_finite() {
            return false;
        }
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += 0.5 * eps * gi;
        }
    }
    true
}

pub fn kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|v| v * v).sum::<f64>()
}

/// One HMC transition from `q` (updated in place on acceptance).
pub fn hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &T,
    q: &mut Vec<f64>,
    eps: f64,
    steps: usize,
    rng: &mut R,
) -> HmcOutcome {
    let n = q.len();
    let mut grad = vec![0.0; n];
    let logp0 = target.log_density_and_grad(q, &mut grad);
    let p0: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let h0 = -logp0 + kinetic(&p0);

    let mut q1 = q.clone();
    let mut p1 = p0;
    let mut logp1 = logp0;
    let completed = leapfrog(target, &mut q1, &mut p1, &mut grad, &mut logp1, eps, steps);

    let reject = |divergent, out_of_support, energy_error| HmcOutcome {
        accepted: false,
        accept_prob: 0.0,
        divergent,
        out_of_support,
        energy_error,
    };
    if !completed || !logp1.is_finite() {
        return if logp1 == f64::NEG_INFINITY && !target.in_support(&q1) {
            reject(false, true, f64::INFINITY)
        } else {
            reject(true, false, f64::NAN)
        };
    }
    let h1 = -logp1 + kinetic(&p1);
    let energy_error = h1 - h0;
    if !energy_error.is_finite() {
        return reject(true, false, energy_error);
    }
    let log_accept = (-energy_error).min(0.0);
    debug_assert!(!log_accept.is_nan());
    let accept_prob = log_accept.exp();
    let accepted = log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept;
    if accepted {
        *q = q1;
    }
    HmcOutcome {
        accepted,
        accept_prob,
        divergent: false,
        out_of_support: false,
        energy_error,
    }
}

/// Nesterov dual averaging of the log step size towards a target
/// acceptance probability.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target_accept: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    iteration: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        DualAveraging {
            mu: (10.0 * initial_step).ln(),
            target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            iteration: 0.0,
            h_bar: 0.0,
            log_eps: initial_step.ln(),
            log_eps_bar: initial_step.ln(),
        }
    }

    /// Feed the acceptance probability of the last transition.
    pub fn update(&mut self, accept_prob: f64) {
        self.iteration += 1.0;
        let t = self.iteration;
        let w = 1.0 / (t + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target_accept - accept_prob);
        self.log_eps = self.mu - t.sqrt() / self.gamma * self.h_bar;
        let eta = t.powf(-self.kappa);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    /// Step size to use during adaptation.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size to freeze after adaptation.
    pub fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Step size over a whole chain. During burnin, dual averaging runs in two
/// windows, restarting halfway from the averaged step so the early
/// transient does not drag the final value. The averaged step is frozen
/// once burnin ends.
#[derive(Debug, Clone)]
pub struct StepSchedule {
    adapt: Option<DualAveraging>,
    target_accept: f64,
    burnin: usize,
    step: f64,
}

impl StepSchedule {
    pub fn new(initial_step: f64, target_accept: f64, burnin: usize, adapt: bool) -> Self {
        StepSchedule {
            adapt: adapt.then(|| DualAveraging::new(initial_step, target_accept)),
            target_accept,
            burnin,
            step: initial_step,
        }
    }

    /// Step size for iteration `iter`; call once per iteration in order.
    pub fn step(&mut self, iter: usize) -> f64 {
        let Some(adapt) = self.adapt.as_mut() else {
            return self.step;
        };
        if iter < self.burnin {
            if iter == self.burnin / 2 && iter > 0 {
                *adapt = DualAveraging::new(adapt.final_step(), self.target_accept);
            }
            return adapt.current();
        }
        if iter == self.burnin {
            self.step = adapt.final_step();
        }
        self.step
    }

    pub fn observe(&mut self, iter: usize, accept_prob: f64) {
        if iter < self.burnin {
            if let Some(adapt) = self.adapt.as_mut() {
                adapt.update(accept_prob);
            }
        }
    }

    /// The post-burnin step (the initial one before burnin ends).
    pub fn frozen(&self) -> f64 {
        self.step
    }
}
