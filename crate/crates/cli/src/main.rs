//! `porbnet`: prior sampling, posterior fits and covariance tables for
//! Poisson-process RBF networks, written as CSV/JSON for plotting.
//!
//! ```text
//! porbnet sample-prior --model porbnet --lambda 1 --region -5 5 --samples 50 --out prior
//! porbnet fit --data data/mcycle.csv --intensity learned --lambda 15 --chains 4 --out fit
//! porbnet kernel --out kernel
//! ```
//!
//! Exit status is 2 for configuration errors and 3 when the sampler aborts.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{IntensityChoice, ModelKind, RunConfig};
use error::Result;

#[derive(Parser)]
#[command(name = "porbnet", version, about = "Poisson-process RBF network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw prior functions; write samples, pointwise moments and upcrossing counts.
    SamplePrior {
        #[command(flatten)]
        common: Common,
        /// Prior functions written out in full.
        #[arg(long)]
        samples: Option<usize>,
        /// Prior functions behind the summary tables.
        #[arg(long)]
        summary_samples: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
        /// Hidden units of the BNN.
        #[arg(long)]
        width: Option<usize>,
    },
    /// Sample the posterior on a dataset; write chains, predictive bands and metrics.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        intensity: Option<IntensityChoice>,
        /// Two-column x,y CSV file.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thinning: Option<usize>,
        #[arg(long)]
        leapfrog: Option<usize>,
        /// Initial HMC step size.
        #[arg(long)]
        step_size: Option<f64>,
        /// Independent chains, run concurrently.
        #[arg(long)]
        chains: Option<usize>,
        /// Random train/test splits, seeded `seed`, `seed + 1`, ...
        #[arg(long)]
        splits: Option<usize>,
        /// SGCP intensity upper bound.
        #[arg(long)]
        lambda_star: Option<f64>,
        /// Normalize with training-split statistics only.
        #[arg(long)]
        train_only_stats: bool,
        #[arg(long)]
        width: Option<usize>,
    },
    /// Tabulate Cov(x - h/2, x + h/2), closed form next to Monte Carlo.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Comma-separated gaps h.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gaps: Option<Vec<f64>>,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
        /// Gaussian-center RBF kernel instead of PoRB-NET.
        #[arg(long)]
        williams: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    /// Homogeneous intensity (expected units per unit length).
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    region: Option<Vec<f64>>,
    #[arg(long)]
    s0_sq: Option<f64>,
    #[arg(long)]
    sigma_w_sq: Option<f64>,
    #[arg(long)]
    sigma_b_sq: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.model.kind, self.model);
        set(&mut cfg.prior.lambda, self.lambda);
        if let Some(r) = self.region {
            cfg.prior.region = Some([r[0], r[1]]);
        }
        set(&mut cfg.prior.s0_sq, self.s0_sq);
        set(&mut cfg.prior.sigma_w_sq, self.sigma_w_sq);
        set(&mut cfg.prior.sigma_b_sq, self.sigma_b_sq);
        set(&mut cfg.prior.noise_var, self.noise_var);
        set(&mut cfg.mcmc.seed, self.seed);
        set(&mut cfg.output.dir, self.out);
        Ok(cfg)
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::SamplePrior {
            common,
            samples,
            summary_samples,
            grid_size,
            width,
        } => {
            let mut cfg = common.resolve()?;
            set(&mut cfg.output.samples, samples);
            set(&mut cfg.output.summary_samples, summary_samples);
            set(&mut cfg.output.grid_size, grid_size);
            set(&mut cfg.model.bnn_width, width);
            cfg.validate()?;
            commands::sample_prior(&cfg)
        }
        Cmd::Fit {
            common,
            intensity,
            data,
            iters,
            burnin,
            thinning,
            leapfrog,
            step_size,
            chains,
            splits,
            lambda_star,
            train_only_stats,
            width,
        } => {
            let mut cfg = common.resolve()?;
            set(&mut cfg.model.intensity, intensity);
            cfg.data.path = data.or(cfg.data.path);
            set(&mut cfg.mcmc.n_iterations, iters);
            set(&mut cfg.mcmc.n_burnin, burnin);
            set(&mut cfg.mcmc.thinning, thinning);
            set(&mut cfg.mcmc.hmc_leapfrog_steps, leapfrog);
            set(&mut cfg.mcmc.hmc_step_size, step_size);
            set(&mut cfg.output.chains, chains);
            set(&mut cfg.data.n_splits, splits);
            cfg.model.lambda_star = lambda_star.or(cfg.model.lambda_star);
            cfg.data.train_only_stats |= train_only_stats;
            set(&mut cfg.model.bnn_width, width);
            cfg.validate()?;
            commands::fit(&cfg)
        }
        Cmd::Kernel {
            common,
            gaps,
            mc_samples,
            grid_size,
            williams,
        } => {
            let mut cfg = common.resolve()?;
            set(&mut cfg.output.gaps, gaps);
            set(&mut cfg.output.mc_samples, mc_samples);
            set(&mut cfg.output.kernel_grid_size, grid_size);
            cfg.output.williams |= williams;
            cfg.validate()?;
            commands::kernel(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
