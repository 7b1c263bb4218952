use std::io::Write;

use porbnet::evaluation::{count_upcrossings, rmse, test_log_likelihood, MetricsReport};
use porbnet::kernel::{prior_function_samples, variogram_analytic, variogram_mc, variogram_williams};
use porbnet::mcmc::{
    bnn_prior_function_samples, posterior_predictive, run_bnn_chains, run_chains, BnnHyper, Chain, IntensityMode,
    Regressor,
};
use porbnet::network::linspace;
use porbnet::sgcp::SgcpConfig;
use porbnet::{rng_from_seed, Dataset, GpHyper, Hyperparams, IntensityModel, Region};

use crate::config::{IntensityChoice, ModelKind, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{write_predictive, write_variogram, Manifest, OutDir};

fn region_or_default(cfg: &RunConfig) -> Result<Region> {
    let [lo, hi] = cfg.prior.region.unwrap_or([-5.0, 5.0]);
    Ok(Region::new(lo, hi)?)
}

fn hyperparams(cfg: &RunConfig, region: Region) -> Hyperparams {
    let p = &cfg.prior;
    Hyperparams {
        s0_sq: p.s0_sq,
        sigma_w_sq: p.sigma_w_sq,
        sigma_b_sq: p.sigma_b_sq,
        noise_var: p.noise_var,
        region,
        gamma_alpha: p.gamma_alpha,
        gamma_beta: cfg.gamma_beta(),
    }
}

fn bnn_hyper(cfg: &RunConfig) -> BnnHyper {
    BnnHyper {
        width: cfg.model.bnn_width,
        sigma_w_sq: cfg.prior.sigma_w_sq,
        sigma_b_sq: cfg.prior.sigma_b_sq,
        noise_var: cfg.prior.noise_var,
    }
}

/// Prior function draws on a grid over the region: a few in long format for
/// plotting, and a larger batch reduced to pointwise moments and an
/// upcrossing histogram.
pub fn sample_prior(cfg: &RunConfig) -> Result<()> {
    let region = region_or_default(cfg)?;
    let grid = region.grid(cfg.output.grid_size);
    let mut rng = rng_from_seed(cfg.seed(), 0);
    let (shown, batch) = match cfg.model.kind {
        ModelKind::Porbnet => {
            let hyper = hyperparams(cfg, region);
            hyper.validate()?;
            let intensity = IntensityModel::homogeneous(region, cfg.prior.lambda);
            (
                prior_function_samples(&hyper, &intensity, &grid, cfg.output.samples, &mut rng)?,
                prior_function_samples(&hyper, &intensity, &grid, cfg.output.summary_samples, &mut rng)?,
            )
        }
        ModelKind::Bnn => {
            let hyper = bnn_hyper(cfg);
            hyper.validate()?;
            (
                bnn_prior_function_samples(&hyper, &grid, cfg.output.samples, &mut rng),
                bnn_prior_function_samples(&hyper, &grid, cfg.output.summary_samples, &mut rng),
            )
        }
    };

    let mut out = OutDir::create(&cfg.output.dir)?;
    let manifest = Manifest::new("sample-prior", cfg)?;
    out.write_with("prior_samples.csv", |w| {
        writeln!(w, "sample,x,value")?;
        for (s, f) in shown.iter().enumerate() {
            for (x, v) in grid.iter().zip(f) {
                writeln!(w, "{s},{x},{v}")?;
            }
        }
        Ok(())
    })?;

    let n = batch.len() as f64;
    out.write_with("prior_summary.csv", |w| {
        writeln!(w, "x,mean,variance")?;
        for (i, x) in grid.iter().enumerate() {
            let mean = batch.iter().map(|f| f[i]).sum::<f64>() / n;
            let var = batch.iter().map(|f| (f[i] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            writeln!(w, "{x},{mean},{var}")?;
        }
        Ok(())
    })?;

    let counts: Vec<usize> = batch
        .iter()
        .map(|f| count_upcrossings(f, cfg.output.upcrossing_level))
        .collect();
    let mut histogram = vec![0usize; counts.iter().max().map_or(1, |m| m + 1)];
    for &c in &counts {
        histogram[c] += 1;
    }
    out.write_with("upcrossings.csv", |w| {
        writeln!(w, "upcrossings,count")?;
        for (k, c) in histogram.iter().enumerate() {
            writeln!(w, "{k},{c}")?;
        }
        Ok(())
    })?;

    println!(
        "{} prior functions on {} points, mean upcrossings of {}: {:.3}",
        batch.len(),
        grid.len(),
        cfg.output.upcrossing_level,
        counts.iter().sum::<usize>() as f64 / n
    );
    manifest.finish(&mut out)
}

/// Covariance table `Cov(x - h/2, x + h/2)` over midpoints and gaps.
pub fn kernel(cfg: &RunConfig) -> Result<()> {
    let region = region_or_default(cfg)?;
    let grid = region.grid(cfg.output.kernel_grid_size);
    let gaps = &cfg.output.gaps;
    let rows = if cfg.output.williams {
        variogram_williams(
            cfg.prior.williams_center_var,
            cfg.prior.williams_scale_var,
            cfg.prior.sigma_w_sq,
            gaps,
            &grid,
        )
    } else {
        let hyper = hyperparams(cfg, region);
        hyper.validate()?;
        let intensity = IntensityModel::homogeneous(region, cfg.prior.lambda);
        let mut rng = rng_from_seed(cfg.seed(), 0);
        let mut rows = variogram_analytic(&hyper, cfg.prior.lambda, gaps, &grid);
        rows.extend(variogram_mc(
            &hyper,
            &intensity,
            gaps,
            &grid,
            cfg.output.mc_samples,
            &mut rng,
        )?);
        rows
    };
    let mut out = OutDir::create(&cfg.output.dir)?;
    let manifest = Manifest::new("kernel", cfg)?;
    out.write_with("variogram.csv", |w| write_variogram(w, &rows))?;
    println!("{} variogram rows", rows.len());
    manifest.finish(&mut out)
}

/// Merge chains into one sample set for predictive summaries.
fn pool<S: Clone>(chains: &[Chain<S>]) -> Chain<S> {
    let mut pooled = chains[0].clone();
    for c in &chains[1..] {
        pooled.samples.extend(c.samples.iter().cloned());
    }
    pooled
}

struct SplitResult {
    llh: f64,
    rmse: f64,
}

/// Chain files, predictive table and held-out metrics for one split.
fn emit_chains<S: Regressor + Clone>(
    out: &mut OutDir,
    prefix: &str,
    chains: &[Chain<S>],
    grid: &[f64],
    test: &Dataset,
    noise_var: f64,
) -> Result<SplitResult> {
    for (i, chain) in chains.iter().enumerate() {
        let name = if chains.len() == 1 {
            format!("{prefix}chain.jsonl")
        } else {
            format!("{prefix}chain_{i}.jsonl")
        };
        let mut w = out.file(&name)?;
        chain.write_jsonl(&mut w)?;
        w.flush().map_err(porbnet::Error::from)?;
        println!(
            "{name}: {} samples, accept hmc {:.2} birth {:.2} death {:.2}, divergent {:.3}, step {:.3e}",
            chain.len(),
            chain.accept_rates.hmc,
            chain.accept_rates.birth,
            chain.accept_rates.death,
            chain.accept_rates.divergent,
            chain.step_size
        );
    }
    let pooled = pool(chains);
    let rows = posterior_predictive(&pooled, grid, noise_var);
    out.write_with(&format!("{prefix}predictive.csv"), |w| write_predictive(w, &rows))?;
    Ok(SplitResult {
        llh: test_log_likelihood(&pooled, test, noise_var),
        rmse: rmse(&pooled, test),
    })
}

/// Posterior inference on a CSV dataset, repeated over random train/test splits.
pub fn fit(cfg: &RunConfig) -> Result<()> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Config("fit needs a dataset: pass --data or set data.path".into()))?;
    if cfg.model.kind == ModelKind::Bnn && cfg.model.intensity != IntensityChoice::Fixed {
        return Err(CliError::Config(
            "the BNN baseline has no intensity; use --intensity fixed".into(),
        ));
    }
    let raw = Dataset::load_csv(path).map_err(|source| CliError::Dataset {
        path: path.clone(),
        source,
    })?;
    let name = cfg.data.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
    });

    let mut out = OutDir::create(&cfg.output.dir)?;
    let mut manifest = Manifest::new("fit", cfg)?;
    let (mut llh, mut err) = (Vec::new(), Vec::new());
    for s in 0..cfg.data.n_splits {
        let prefix = if cfg.data.n_splits > 1 {
            format!("split_{s}/")
        } else {
            String::new()
        };
        let seed = cfg.seed() + s as u64;
        let mut data = raw.split(cfg.data.train_fraction, seed)?;
        if cfg.data.normalize {
            data = if cfg.data.train_only_stats {
                data.normalize_on_train()?
            } else {
                data.normalize()?
            };
        }
        manifest.normalization.extend(data.normalization);
        let (train, test) = (data.train(), data.test());
        let x_lo = data.x.iter().copied().fold(f64::INFINITY, f64::min);
        let x_hi = data.x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = linspace(x_lo, x_hi, cfg.output.predictive_grid_size);

        let split = data.split.as_ref().expect("split above");
        out.write_with(&format!("{prefix}data.csv"), |w| {
            writeln!(w, "x,y,set")?;
            let mut rows: Vec<(usize, &str)> = split.train.iter().map(|&i| (i, "train")).collect();
            rows.extend(split.test.iter().map(|&i| (i, "test")));
            rows.sort_unstable();
            for (i, set) in rows {
                writeln!(w, "{},{},{set}", data.x[i], data.y[i])?;
            }
            Ok(())
        })?;

        let mut mcmc = cfg.mcmc.clone();
        mcmc.seed = seed;
        let result = match cfg.model.kind {
            ModelKind::Bnn => {
                let chains = run_bnn_chains(&train, &bnn_hyper(cfg), &mcmc, cfg.output.chains)?;
                emit_chains(&mut out, &prefix, &chains, &grid, &test, cfg.prior.noise_var)?
            }
            ModelKind::Porbnet => {
                let region = match cfg.prior.region {
                    Some([lo, hi]) => Region::new(lo, hi)?,
                    None => Region::around(x_lo, x_hi, cfg.prior.s0_sq, cfg.prior.lambda)?,
                };
                let hyper = hyperparams(cfg, region);
                let intensity = IntensityModel::homogeneous(region, cfg.prior.lambda);
                let mode = match cfg.model.intensity {
                    IntensityChoice::Fixed => IntensityMode::Fixed,
                    IntensityChoice::Learned => IntensityMode::HomogeneousLearned,
                    IntensityChoice::Sgcp => {
                        let lambda_star = cfg.model.lambda_star.unwrap_or(2.0 * cfg.prior.lambda);
                        let mut sgcp = SgcpConfig::for_region(&region, lambda_star);
                        sgcp.gp = GpHyper {
                            variance: cfg.model.gp_variance,
                            lengthscale: cfg.model.gp_lengthscale.unwrap_or(sgcp.gp.lengthscale),
                        };
                        IntensityMode::Sgcp(sgcp)
                    }
                };
                let sgcp = match &mode {
                    IntensityMode::Sgcp(c) => {
                        serde_json::json!({"lambda_star": c.lambda_star, "gp": c.gp})
                    }
                    _ => serde_json::Value::Null,
                };
                manifest.derived.push(serde_json::json!({
                    "split": s,
                    "region": [region.lo, region.hi],
                    "gamma_beta": hyper.gamma_beta,
                    "sgcp": sgcp,
                }));
                let chains = run_chains(&train, &hyper, &intensity, &mode, &mcmc, cfg.output.chains)?;
                if let IntensityMode::Sgcp(sgcp) = &mode {
                    let ix = region.grid(cfg.output.predictive_grid_size);
                    let means: Vec<_> = chains.iter().filter_map(|c| c.intensity_mean.as_ref()).collect();
                    out.write_with(&format!("{prefix}intensity.csv"), |w| {
                        writeln!(w, "x,intensity,lambda_star")?;
                        for &x in &ix {
                            let v = means.iter().map(|m| m.eval(x)).sum::<f64>() / means.len() as f64;
                            writeln!(w, "{x},{v},{}", sgcp.lambda_star)?;
                        }
                        Ok(())
                    })?;
                }
                emit_chains(&mut out, &prefix, &chains, &grid, &test, cfg.prior.noise_var)?
            }
        };
        println!("split {s}: test llh {:.4}, rmse {:.4}", result.llh, result.rmse);
        llh.push(result.llh);
        err.push(result.rmse);
    }

    let metrics = MetricsReport::from_splits(&name, cfg.model.kind.as_str(), &llh, &err, cfg.seed());
    out.write_json("metrics.json", &metrics)?;
    manifest.finish(&mut out)
}
