//! Posterior sampling. Each iteration runs one HMC update of the network
//! parameters, a batch of birth/death moves on the width, and an update of
//! the intensity: nothing for a fixed intensity, a random-walk on the level
//! for a learned homogeneous one, or SGCP sweeps and a refresh of the
//! point estimate.

mod bnn;
mod moves;
mod predictive;

pub use bnn::{
    bnn_prior_function_samples, run_bnn_baseline, run_bnn_chain, run_bnn_chains, sample_bnn_prior, BnnHyper, BnnState,
    BnnTarget,
};
pub use moves::{
    birth_death_update, hmc_update, level_update, log_birth_ratio, log_death_ratio, log_level_target, MoveKind,
};
pub use predictive::{posterior_predictive, PredictiveRow};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{require_positive, Error, Result};
use crate::hmc::StepSchedule;
use crate::intensity::{refresh_scales, sample_prior_network, IntensityKind, IntensityModel, PiecewiseLinearFn};
use crate::network::{Hyperparams, NetworkState};
use crate::posterior::log_posterior;
use crate::sgcp::{intensity_point_estimate, SgcpConfig, SgcpState};

/// A sampled function: anything with a scalar forward pass.
pub trait Regressor: Sync {
    fn forward(&self, x: f64) -> f64;

    fn width(&self) -> usize;

    /// One chain-file line for this sample.
    fn record(&self, iter: usize, log_post: f64) -> serde_json::Value;
}

impl Regressor for NetworkState {
    fn forward(&self, x: f64) -> f64 {
        NetworkState::forward(self, x)
    }

    fn width(&self) -> usize {
        NetworkState::width(self)
    }

    fn record(&self, iter: usize, log_post: f64) -> serde_json::Value {
        serde_json::json!({
            "iter": iter,
            "K": self.width(),
            "bias": self.bias,
            "weights": self.weights,
            "centers": self.centers,
            "scales": self.scales,
            "log_post": log_post,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MCMCConfig {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thinning: usize,
    pub hmc_leapfrog_steps: usize,
    /// Initial step size; adapted during burnin when `adapt_step_size` is set.
    pub hmc_step_size: f64,
    pub adapt_step_size: bool,
    pub target_accept: f64,
    pub birth_death_moves_per_iter: usize,
    /// Scale-proposal variance of the free-scale variant; unused while scales
    /// are tied to the intensity.
    pub sigma_s_sq: f64,
    /// Random-walk sd on `log lambda` for a learned homogeneous level.
    pub level_step: f64,
    /// Abort once more than this fraction of post-burnin trajectories diverge.
    pub max_divergent_fraction: f64,
    pub seed: u64,
}

impl Default for MCMCConfig {
    fn default() -> Self {
        MCMCConfig {
            n_iterations: 2000,
            n_burnin: 1000,
            thinning: 1,
            hmc_leapfrog_steps: 20,
            hmc_step_size: 0.01,
            adapt_step_size: true,
            target_accept: 0.75,
            birth_death_moves_per_iter: 10,
            sigma_s_sq: 1.0,
            level_step: 0.1,
            max_divergent_fraction: 0.5,
            seed: 0,
        }
    }
}

impl MCMCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burnin >= self.n_iterations {
            return Err(Error::InvalidParameter {
                name: "n_burnin",
                reason: format!(
                    "must be below n_iterations ({} >= {})",
                    self.n_burnin, self.n_iterations
                ),
            });
        }
        for (name, v) in [
            ("thinning", self.thinning),
            ("hmc_leapfrog_steps", self.hmc_leapfrog_steps),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        require_positive("hmc_step_size", self.hmc_step_size)?;
        require_positive("sigma_s_sq", self.sigma_s_sq)?;
        require_positive("level_step", self.level_step)?;
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidParameter {
                name: "target_accept",
                reason: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }

    /// Number of retained samples: every `thinning`-th post-burnin iteration.
    pub fn n_samples(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thinning
    }

    fn keeps(&self, iter: usize) -> bool {
        iter >= self.n_burnin && (iter - self.n_burnin + 1).is_multiple_of(self.thinning)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntensityMode {
    Fixed,
    HomogeneousLearned,
    Sgcp(SgcpConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub iter: usize,
    pub state: S,
    pub log_post: f64,
    /// Homogeneous level at this sample when it is being learned.
    pub level: Option<f64>,
    /// Index into [`Chain::intensity_snapshots`].
    pub intensity_id: Option<usize>,
}

/// Acceptance rates per move type, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AcceptRates {
    pub hmc: f64,
    pub birth: f64,
    pub death: f64,
    pub intensity: f64,
    /// Divergent HMC trajectories after burnin.
    pub divergent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain<S> {
    pub samples: Vec<Sample<S>>,
    pub accept_rates: AcceptRates,
    /// Log posterior after every iteration, burnin included.
    pub log_posterior_trace: Vec<f64>,
    pub intensity_snapshots: Vec<PiecewiseLinearFn>,
    /// Post-burnin average of the SGCP point estimate.
    pub intensity_mean: Option<PiecewiseLinearFn>,
    pub step_size: f64,
}

impl<S: Regressor> Chain<S> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `predictions[s][i]`: output of sample `s` at `xs[i]`.
    pub fn predictions(&self, xs: &[f64]) -> Vec<Vec<f64>> {
        self.samples
            .par_iter()
            .map(|s| xs.iter().map(|&x| s.state.forward(x)).collect())
            .collect()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.state.width()).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, &s.state.record(s.iter, s.log_post))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Counter {
    proposed: usize,
    accepted: usize,
}

impl Counter {
    fn add(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += usize::from(accepted);
    }

    fn rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Run one chain on stream 0 of `config.seed`, starting from a prior draw.
pub fn run_mcmc(
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    mode: &IntensityMode,
    config: &MCMCConfig,
) -> Result<Chain<NetworkState>> {
    run_chain(data, hyper, intensity, mode, config, 0)
}

/// `n` independent chains in parallel on streams `0..n`.
pub fn run_chains(
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    mode: &IntensityMode,
    config: &MCMCConfig,
    n: usize,
) -> Result<Vec<Chain<NetworkState>>> {
    (0..n as u64)
        .into_par_iter()
        .map(|stream| run_chain(data, hyper, intensity, mode, config, stream))
        .collect()
}

pub fn run_chain(
    data: &Dataset,
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    mode: &IntensityMode,
    config: &MCMCConfig,
    stream: u64,
) -> Result<Chain<NetworkState>> {
    config.validate()?;
    hyper.validate()?;
    intensity.validate()?;
    let mut rng = crate::rng_from_seed(config.seed, stream);
    let mut intensity = intensity.clone();

    let mut sgcp = match mode {
        IntensityMode::Fixed => None,
        IntensityMode::HomogeneousLearned => {
            if !intensity.is_constant() {
                return Err(Error::InvalidParameter {
                    name: "intensity",
                    reason: "a learned level needs a homogeneous intensity".into(),
                });
            }
            None
        }
        IntensityMode::Sgcp(cfg) => {
            cfg.validate()?;
            intensity = IntensityModel::sgcp(intensity.region, cfg.lambda_star, cfg.gp);
            Some(cfg)
        }
    };

    let mut state = sample_prior_network(hyper, &intensity, &mut rng)?;
    let mut sgcp_state = match sgcp.as_mut() {
        Some(cfg) => Some(SgcpState::new(
            intensity.region,
            cfg.lambda_star,
            cfg.gp,
            &state.centers,
            &mut rng,
        )?),
        None => None,
    };
    refresh_scales(&mut state, hyper, &intensity);
    let grid = intensity.region.grid(sgcp.map_or(2, |c| c.grid_size));

    let mut schedule = StepSchedule::new(
        config.hmc_step_size,
        config.target_accept,
        config.n_burnin,
        config.adapt_step_size,
    );
    let (mut hmc, mut birth, mut death, mut level) = (
        Counter::default(),
        Counter::default(),
        Counter::default(),
        Counter::default(),
    );
    let (mut post_hmc, mut divergent) = (0usize, 0usize);

    let mut chain = Chain {
        samples: Vec::with_capacity(config.n_samples()),
        accept_rates: AcceptRates::default(),
        log_posterior_trace: Vec::with_capacity(config.n_iterations),
        intensity_snapshots: Vec::new(),
        intensity_mean: None,
        step_size: config.hmc_step_size,
    };
    let mut mean_acc = vec![0.0; grid.len()];
    let mut mean_count = 0usize;

    for iter in 0..config.n_iterations {
        let burnin = iter < config.n_burnin;
        let eps = schedule.step(iter);
        let out = hmc_update(
            &mut state,
            data,
            hyper,
            &intensity,
            config.hmc_leapfrog_steps,
            eps,
            &mut rng,
        );
        hmc.add(out.accepted);
        schedule.observe(iter, out.accept_prob);
        if !burnin {
            post_hmc += 1;
            divergent += usize::from(out.divergent);
            if post_hmc >= 100 && divergent as f64 > config.max_divergent_fraction * post_hmc as f64 {
                return Err(Error::SamplerAbort(format!(
                    "{divergent} of {post_hmc} post-burnin HMC trajectories diverged at step size {eps:.3e}; \
                     lower --step-size or --leapfrog"
                )));
            }
        }

        let mut preds = state.forward_many(&data.x);
        for _ in 0..config.birth_death_moves_per_iter {
            match birth_death_update(&mut state, &mut preds, data, hyper, &intensity, &mut rng) {
                (MoveKind::Birth, ok) => birth.add(ok),
                (MoveKind::Death, ok) => death.add(ok),
                (MoveKind::None, _) => death.add(false),
            }
        }

        match mode {
            IntensityMode::Fixed => {}
            IntensityMode::HomogeneousLearned => {
                let ok = level_update(&mut state, data, hyper, &mut intensity, config.level_step, &mut rng);
                level.add(ok);
            }
            IntensityMode::Sgcp(cfg) => {
                let sg = sgcp_state.as_mut().expect("sgcp state");
                sg.sync_centers(&state.centers, &mut rng)?;
                sg.check_invariants()?;
                let mut snaps = Vec::with_capacity(cfg.sweeps_per_iter);
                for _ in 0..cfg.sweeps_per_iter {
                    sg.update_thinned_events(cfg, &mut rng)?;
                    level.add(sg.update_h(cfg, false, &mut rng)?.accepted);
                    snaps.push(sg.snapshot());
                }
                let estimate = intensity_point_estimate(&snaps, cfg.lambda_star, &grid)?;
                if !burnin {
                    mean_acc.iter_mut().zip(estimate.values()).for_each(|(a, v)| *a += v);
                    mean_count += 1;
                }
                intensity.kind = IntensityKind::Sgcp {
                    lambda_star: cfg.lambda_star,
                    gp: cfg.gp,
                    estimate,
                };
                refresh_scales(&mut state, hyper, &intensity);
            }
        }

        let lp = log_posterior(&state, data, hyper, &intensity);
        chain.log_posterior_trace.push(lp);
        if config.keeps(iter) {
            debug_assert!(state.check_invariants(&intensity.region).is_ok());
            let intensity_id = match &intensity.kind {
                IntensityKind::Sgcp { estimate, .. } => {
                    chain.intensity_snapshots.push(estimate.clone());
                    Some(chain.intensity_snapshots.len() - 1)
                }
                _ => None,
            };
            let level = match (mode, &intensity.kind) {
                (IntensityMode::HomogeneousLearned, IntensityKind::Homogeneous { level }) => Some(*level),
                _ => None,
            };
            chain.samples.push(Sample {
                iter,
                state: state.clone(),
                log_post: lp,
                level,
                intensity_id,
            });
        }
    }

    if mean_count > 0 {
        let values = mean_acc.iter().map(|a| a / mean_count as f64).collect();
        chain.intensity_mean = Some(PiecewiseLinearFn::new(grid.clone(), values)?);
    }
    chain.step_size = schedule.frozen();
    chain.accept_rates = AcceptRates {
        hmc: hmc.rate(),
        birth: birth.rate(),
        death: death.rate(),
        intensity: level.rate(),
        divergent: if post_hmc == 0 {
            0.0
        } else {
            divergent as f64 / post_hmc as f64
        },
    };
    debug_assert_eq!(chain.samples.len(), config.n_samples());
    Ok(chain)
}
