//! Standard BNN baseline: fixed width, RBF activation in feed-forward form
//! `exp(-(w x + b)^2)`, i.i.d. Gaussian priors on every weight and bias.
//! The implied center of unit `k` is `-b_k / w_k`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AcceptRates, Chain, MCMCConfig, Regressor, Sample};
use crate::dataset::Dataset;
use crate::error::{require_positive, Error, Result};
use crate::hmc::{hmc_step, StepSchedule, Target};
use crate::network::log_normal_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnnHyper {
    pub width: usize,
    /// Prior variance of input and output weights.
    pub sigma_w_sq: f64,
    /// Prior variance of hidden and output biases.
    pub sigma_b_sq: f64,
    pub noise_var: f64,
}

impl BnnHyper {
    pub fn validate(&self) -> Result<()> {
        require_positive("sigma_w_sq", self.sigma_w_sq)?;
        require_positive("sigma_b_sq", self.sigma_b_sq)?;
        require_positive("noise_var", self.noise_var)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnState {
    pub bias: f64,
    pub out_weights: Vec<f64>,
    pub in_weights: Vec<f64>,
    pub in_biases: Vec<f64>,
}

impl BnnState {
    /// Implied centers `-b_k / w_k`.
    pub fn centers(&self) -> Vec<f64> {
        self.in_biases
            .iter()
            .zip(&self.in_weights)
            .map(|(b, w)| -b / w)
            .collect()
    }

    fn encode(&self) -> Vec<f64> {
        let mut q = vec![self.bias];
        q.extend(&self.out_weights);
        q.extend(&self.in_weights);
        q.extend(&self.in_biases);
        q
    }

    fn decode(q: &[f64], k: usize) -> Self {
        BnnState {
            bias: q[0],
            out_weights: q[1..1 + k].to_vec(),
            in_weights: q[1 + k..1 + 2 * k].to_vec(),
            in_biases: q[1 + 2 * k..1 + 3 * k].to_vec(),
        }
    }
}

impl Regressor for BnnState {
    fn forward(&self, x: f64) -> f64 {
        let mut f = self.bias;
        for k in 0..self.out_weights.len() {
            let z = self.in_weights[k] * x + self.in_biases[k];
            f += self.out_weights[k] * (-z * z).exp();
        }
        f
    }

    fn width(&self) -> usize {
        self.out_weights.len()
    }

    fn record(&self, iter: usize, log_post: f64) -> serde_json::Value {
        serde_json::json!({
            "iter": iter,
            "K": self.out_weights.len(),
            "bias": self.bias,
            "weights": self.out_weights,
            "input_weights": self.in_weights,
            "input_biases": self.in_biases,
            "log_post": log_post,
        })
    }
}

pub fn sample_bnn_prior<R: Rng + ?Sized>(hyper: &BnnHyper, rng: &mut R) -> BnnState {
    let w = Normal::new(0.0, hyper.sigma_w_sq.sqrt()).expect("valid sd");
    let b = Normal::new(0.0, hyper.sigma_b_sq.sqrt()).expect("valid sd");
    let k = hyper.width;
    BnnState {
        bias: b.sample(rng),
        out_weights: (0..k).map(|_| w.sample(rng)).collect(),
        in_weights: (0..k).map(|_| w.sample(rng)).collect(),
        in_biases: (0..k).map(|_| b.sample(rng)).collect(),
    }
}

/// Values of `n` BNN prior functions at `points`, row per sample.
pub fn bnn_prior_function_samples<R: Rng + ?Sized>(
    hyper: &BnnHyper,
    points: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let net = sample_bnn_prior(hyper, rng);
            points.iter().map(|&x| net.forward(x)).collect()
        })
        .collect()
}

/// Log posterior over `[b, v_1..v_K, w_1..w_K, b_1..b_K]`.
pub struct BnnTarget<'a> {
    pub data: &'a Dataset,
    pub hyper: &'a BnnHyper,
}

impl Target for BnnTarget<'_> {
    fn dim(&self) -> usize {
        1 + 3 * self.hyper.width
    }

    fn log_density_and_grad(&self, q: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.hyper.width;
        let (sw, sb) = (self.hyper.sigma_w_sq, self.hyper.sigma_b_sq);
        let mut lp = log_normal_pdf(q[0], 0.0, sb);
        grad[0] = -q[0] / sb;
        for j in 0..k {
            let (v, w, b) = (q[1 + j], q[1 + k + j], q[1 + 2 * k + j]);
            lp += log_normal_pdf(v, 0.0, sw) + log_normal_pdf(w, 0.0, sw) + log_normal_pdf(b, 0.0, sb);
            grad[1 + j] = -v / sw;
            grad[1 + k + j] = -w / sw;
            grad[1 + 2 * k + j] = -b / sb;
        }
        let mut act = vec![0.0; k];
        for (&x, &y) in self.data.x.iter().zip(&self.data.y) {
            let mut f = q[0];
            for j in 0..k {
                let z = q[1 + k + j] * x + q[1 + 2 * k + j];
                act[j] = (-z * z).exp();
                f += q[1 + j] * act[j];
            }
            lp += log_normal_pdf(y, f, self.hyper.noise_var);
            let g = (y - f) / self.hyper.noise_var;
            grad[0] += g;
            for j in 0..k {
                let z = q[1 + k + j] * x + q[1 + 2 * k + j];
                let dz = g * q[1 + j] * act[j] * (-2.0 * z);
                grad[1 + j] += g * act[j];
                grad[1 + k + j] += dz * x;
                grad[1 + 2 * k + j] += dz;
            }
        }
        lp
    }
}

/// HMC on the fixed-width BNN, with the same step-size adaptation and
/// divergence abort as the main sampler. Runs on stream 0 of `config.seed`.
pub fn run_bnn_baseline(data: &Dataset, hyper: &BnnHyper, config: &MCMCConfig) -> Result<Chain<BnnState>> {
    run_bnn_chain(data, hyper, config, 0)
}

/// `n` independent BNN chains in parallel on streams `0..n`.
pub fn run_bnn_chains(data: &Dataset, hyper: &BnnHyper, config: &MCMCConfig, n: usize) -> Result<Vec<Chain<BnnState>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|stream| run_bnn_chain(data, hyper, config, stream))
        .collect()
}

pub fn run_bnn_chain(data: &Dataset, hyper: &BnnHyper, config: &MCMCConfig, stream: u64) -> Result<Chain<BnnState>> {
    config.validate()?;
    hyper.validate()?;
    let mut rng = crate::rng_from_seed(config.seed, stream);
    let target = BnnTarget { data, hyper };
    let mut q = sample_bnn_prior(hyper, &mut rng).encode();
    let mut schedule = StepSchedule::new(
        config.hmc_step_size,
        config.target_accept,
        config.n_burnin,
        config.adapt_step_size,
    );
    let (mut accepted, mut post, mut divergent) = (0usize, 0usize, 0usize);
    let mut chain = Chain {
        samples: Vec::with_capacity(config.n_samples()),
        accept_rates: AcceptRates::default(),
        log_posterior_trace: Vec::with_capacity(config.n_iterations),
        intensity_snapshots: Vec::new(),
        intensity_mean: None,
        step_size: config.hmc_step_size,
    };
    for iter in 0..config.n_iterations {
        let burnin = iter < config.n_burnin;
        let eps = schedule.step(iter);
        let out = hmc_step(&target, &mut q, eps, config.hmc_leapfrog_steps, &mut rng);
        accepted += usize::from(out.accepted);
        schedule.observe(iter, out.accept_prob);
        if !burnin {
            post += 1;
            divergent += usize::from(out.divergent);
            if post >= 100 && divergent as f64 > config.max_divergent_fraction * post as f64 {
                return Err(Error::SamplerAbort(format!(
                    "{divergent} of {post} post-burnin BNN trajectories diverged at step size {eps:.3e}; \
                     lower --step-size or --leapfrog"
                )));
            }
        }
        let lp = target.log_density(&q);
        chain.log_posterior_trace.push(lp);
        if config.keeps(iter) {
            chain.samples.push(Sample {
                iter,
                state: BnnState::decode(&q, hyper.width),
                log_post: lp,
                level: None,
                intensity_id: None,
            });
        }
    }
    chain.step_size = schedule.frozen();
    chain.accept_rates = AcceptRates {
        hmc: accepted as f64 / config.n_iterations as f64,
        divergent: if post == 0 { 0.0 } else { divergent as f64 / post as f64 },
        ..AcceptRates::default()
    };
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;
    use rand::RngExt;

    fn hyper() -> BnnHyper {
        BnnHyper {
            width: 4,
            sigma_w_sq: 1.5,
            sigma_b_sq: 0.7,
            noise_var: 0.1,
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = hyper();
        let xs: Vec<f64> = (0..12).map(|i| -1.0 + 0.2 * i as f64).collect();
        let data = Dataset::from_xy(xs.clone(), xs.iter().map(|x| x.cos()).collect()).unwrap();
        let t = BnnTarget { data: &data, hyper: &h };
        let mut rng = crate::rng_from_seed(1, 0);
        for _ in 0..20 {
            let q: Vec<f64> = (0..t.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
            let mut g = vec![0.0; q.len()];
            t.log_density_and_grad(&q, &mut g);
            for i in 0..q.len() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[i] += 1e-5;
                qm[i] -= 1e-5;
                let fd = (t.log_density(&qp) - t.log_density(&qm)) / 2e-5;
                assert!((fd - g[i]).abs() < 1e-4 * fd.abs().max(g[i].abs()).max(1.0));
            }
        }
    }

    #[test]
    fn no_data_chain_reproduces_weight_prior() {
        let h = hyper();
        let cfg = MCMCConfig {
            n_iterations: 12_000,
            n_burnin: 2000,
            thinning: 5,
            hmc_leapfrog_steps: 10,
            hmc_step_size: 0.3,
            seed: 2,
            ..MCMCConfig::default()
        };
        let chain = run_bnn_baseline(&Dataset::empty(), &h, &cfg).unwrap();
        assert_eq!(chain.len(), 2000);
        let v: Vec<f64> = chain.samples.iter().map(|s| s.state.out_weights[0]).collect();
        let sd = h.sigma_w_sq.sqrt();
        assert!(stats::ks_pvalue(&v, |x| stats::normal_cdf(x / sd)) > 0.01);
        let b: Vec<f64> = chain.samples.iter().map(|s| s.state.in_biases[2]).collect();
        let sd = h.sigma_b_sq.sqrt();
        assert!(stats::ks_pvalue(&b, |x| stats::normal_cdf(x / sd)) > 0.01);
    }

    #[test]
    fn implied_centers_are_cauchy() {
        let h = BnnHyper {
            width: 1,
            sigma_w_sq: 4.0,
            sigma_b_sq: 1.0,
            noise_var: 1.0,
        };
        let mut rng = crate::rng_from_seed(3, 0);
        let cs: Vec<f64> = (0..20_000)
            .map(|_| sample_bnn_prior(&h, &mut rng).centers()[0])
            .collect();
        let scale = (h.sigma_b_sq / h.sigma_w_sq).sqrt();
        let p = stats::ks_pvalue(&cs, |c| 0.5 + (c / scale).atan() / std::f64::consts::PI);
        assert!(p > 0.01, "{p}");
    }
}
