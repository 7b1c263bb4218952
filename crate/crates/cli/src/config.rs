//! Run configuration: a JSON document with `model`, `prior`, `mcmc`, `data`
//! and `output` sections. Every field has a default, and command-line flags
//! are applied on top of the file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use porbnet::mcmc::MCMCConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Porbnet,
    Bnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Porbnet => "porbnet",
            ModelKind::Bnn => "bnn",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IntensityChoice {
    /// Constant intensity at `--lambda`.
    Fixed,
    /// Constant intensity whose level is sampled under a Gamma prior on lambda^2.
    Learned,
    /// Intensity inferred with a sigmoidal Gaussian Cox process.
    Sgcp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub intensity: IntensityChoice,
    /// Hidden units of the BNN baseline.
    pub bnn_width: usize,
    /// SGCP upper bound; `2 * lambda` when unset.
    pub lambda_star: Option<f64>,
    pub gp_variance: f64,
    /// Latent GP lengthscale; a fifth of the region length when unset.
    pub gp_lengthscale: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: ModelKind::Porbnet,
            intensity: IntensityChoice::Fixed,
            bnn_width: 10,
            lambda_star: None,
            gp_variance: 1.0,
            gp_lengthscale: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    /// Homogeneous intensity, or the prior mean level when it is learned.
    pub lambda: f64,
    /// Center region. `fit` widens the data range by two lengthscales when unset;
    /// the other commands use `[-5, 5]`.
    pub region: Option<[f64; 2]>,
    pub s0_sq: f64,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub noise_var: f64,
    pub gamma_alpha: f64,
    /// Rate of the Gamma prior on lambda^2; `gamma_alpha / lambda^2` when unset,
    /// which puts the prior mean at `lambda^2`.
    pub gamma_beta: Option<f64>,
    /// Center variance of the Gaussian-center kernel in `kernel --williams`.
    pub williams_center_var: f64,
    /// Width variance of the Gaussian-center kernel.
    pub williams_scale_var: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            lambda: 1.0,
            region: None,
            s0_sq: 1.0,
            sigma_w_sq: 1.0,
            sigma_b_sq: 1.0,
            noise_var: 0.01,
            gamma_alpha: 2.0,
            gamma_beta: None,
            williams_center_var: 1.0,
            williams_scale_var: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    /// Label written to `metrics.json`; the file stem when unset.
    pub name: Option<String>,
    pub normalize: bool,
    /// Fit normalization statistics on the training split only.
    pub train_only_stats: bool,
    pub train_fraction: f64,
    pub n_splits: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            path: None,
            name: None,
            normalize: true,
            train_only_stats: false,
            train_fraction: 0.75,
            n_splits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub chains: usize,
    /// Prior functions written to `prior_samples.csv`.
    pub samples: usize,
    /// Prior functions behind `prior_summary.csv` and `upcrossings.csv`.
    pub summary_samples: usize,
    /// Grid of the prior sample and summary tables.
    pub grid_size: usize,
    /// Grid of `predictive.csv` and `intensity.csv`, spanning the data.
    pub predictive_grid_size: usize,
    /// Midpoints `x` of the variogram table.
    pub kernel_grid_size: usize,
    pub upcrossing_level: f64,
    /// Variogram gaps `h` in `Cov(x - h/2, x + h/2)`.
    pub gaps: Vec<f64>,
    /// Prior functions behind the Monte Carlo variogram rows.
    pub mc_samples: usize,
    /// Variogram of the Gaussian-center RBF kernel instead of PoRB-NET.
    pub williams: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("out"),
            chains: 1,
            samples: 50,
            summary_samples: 10_000,
            grid_size: 1000,
            predictive_grid_size: 200,
            kernel_grid_size: 41,
            upcrossing_level: 0.0,
            gaps: vec![0.0, 0.5, 1.0, 2.0],
            mc_samples: 20_000,
            williams: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub prior: PriorSection,
    pub mcmc: MCMCConfig,
    pub data: DataSection,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigFile {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigJson {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn seed(&self) -> u64 {
        self.mcmc.seed
    }

    /// Checks that do not depend on the command. Model parameters are
    /// validated again by the library when they are used.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("prior.lambda", self.prior.lambda),
            ("prior.s0_sq", self.prior.s0_sq),
            ("prior.sigma_w_sq", self.prior.sigma_w_sq),
            ("prior.sigma_b_sq", self.prior.sigma_b_sq),
            ("prior.noise_var", self.prior.noise_var),
            ("prior.gamma_alpha", self.prior.gamma_alpha),
            ("prior.williams_center_var", self.prior.williams_center_var),
            ("prior.williams_scale_var", self.prior.williams_scale_var),
            ("model.gp_variance", self.model.gp_variance),
        ];
        for (name, v) in positive
            .into_iter()
            .chain(self.prior.gamma_beta.map(|v| ("prior.gamma_beta", v)))
            .chain(self.model.lambda_star.map(|v| ("model.lambda_star", v)))
            .chain(self.model.gp_lengthscale.map(|v| ("model.gp_lengthscale", v)))
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if let Some([lo, hi]) = self.prior.region {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(CliError::Config(format!(
                    "prior.region must satisfy lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        for (name, v) in [
            ("model.bnn_width", self.model.bnn_width),
            ("output.chains", self.output.chains),
            ("output.samples", self.output.samples),
            ("data.n_splits", self.data.n_splits),
        ] {
            if v == 0 {
                return Err(CliError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("output.grid_size", self.output.grid_size),
            ("output.predictive_grid_size", self.output.predictive_grid_size),
            ("output.kernel_grid_size", self.output.kernel_grid_size),
        ] {
            if v < 2 {
                return Err(CliError::Config(format!("{name} must be at least 2")));
            }
        }
        if self.output.summary_samples < 2 || self.output.mc_samples < 3 {
            return Err(CliError::Config(
                "output.summary_samples must be at least 2 and output.mc_samples at least 3".into(),
            ));
        }
        if self.output.gaps.iter().any(|g| !g.is_finite()) {
            return Err(CliError::Config("output.gaps must be finite".into()));
        }
        self.mcmc.validate()?;
        Ok(())
    }

    pub fn gamma_beta(&self) -> f64 {
        self.prior
            .gamma_beta
            .unwrap_or(self.prior.gamma_alpha / (self.prior.lambda * self.prior.lambda))
    }

    /// SHA-256 of the JSON serialization, hex encoded. The output directory
    /// is left out so the same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> Result<String> {
        let mut keyed = self.clone();
        keyed.output.dir = PathBuf::new();
        let bytes = serde_json::to_vec(&keyed)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}
