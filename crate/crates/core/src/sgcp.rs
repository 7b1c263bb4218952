//! Sigmoidal Gaussian Cox process over hidden-unit centers.
//!
//! The intensity is `lambda* sigmoid(h(c))` with `h` a GP. The state holds
//! the latent function at the `M` thinned events and at the `K` current
//! centers, in that order. Thinned events are updated by birth/death and
//! random-walk moves, `h` by whitened HMC, and the network sees the
//! intensity only through the Monte Carlo point estimate
//! `lambda_hat = mean_s lambda* sigmoid(E[h | snapshot s])`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};
use crate::gp::{Conditioned, GpHyper, GramFactor};
use crate::hmc::{hmc_step, HmcOutcome, Target};
use crate::intensity::{log_sigmoid, sigmoid, PiecewiseLinearFn};
use crate::network::Region;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgcpConfig {
    pub lambda_star: f64,
    pub gp: GpHyper,
    /// Snapshots of `h` averaged into each refresh of `lambda_hat`.
    pub sweeps_per_iter: usize,
    pub thinned_birth_death_per_sweep: usize,
    /// Random-walk sd for thinned locations, as a fraction of the region length.
    pub perturb_fraction: f64,
    pub h_step_size: f64,
    pub h_leapfrog: usize,
    /// Knots of the piecewise-linear `lambda_hat`.
    pub grid_size: usize,
}

impl SgcpConfig {
    pub fn for_region(region: &Region, lambda_star: f64) -> Self {
        SgcpConfig {
            lambda_star,
            gp: GpHyper::for_region_length(region.length()),
            sweeps_per_iter: 10,
            thinned_birth_death_per_sweep: 10,
            perturb_fraction: 0.05,
            h_step_size: 0.2,
            h_leapfrog: 15,
            grid_size: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("lambda_star", self.lambda_star)?;
        self.gp.validate()?;
        require_positive("perturb_fraction", self.perturb_fraction)?;
        require_positive("h_step_size", self.h_step_size)?;
        for (name, v) in [
            ("sweeps_per_iter", self.sweeps_per_iter),
            ("h_leapfrog", self.h_leapfrog),
            ("grid_size", self.grid_size.saturating_sub(1)),
        ] {
            if v == 0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: "must be positive (grid_size at least 2)".into(),
                });
            }
        }
        Ok(())
    }
}

/// Which likelihood term a latent value carries in the `h` target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// `log sigmoid(h)`: a point of the process.
    Center,
    /// `log sigmoid(-h)`: a rejected candidate.
    Thinned,
    /// No likelihood term.
    Free,
}

/// Posterior of `h` at fixed locations in whitened coordinates `h = L v`.
pub struct LatentTarget {
    chol_l: DMatrix<f64>,
    roles: Vec<Role>,
}

impl LatentTarget {
    pub fn new(gp: &GpHyper, locations: &[f64], roles: Vec<Role>) -> Result<Self> {
        assert_eq!(locations.len(), roles.len());
        let chol_l = if locations.is_empty() {
            DMatrix::zeros(0, 0)
        } else {
            gp.cholesky(locations)?.l()
        };
        Ok(LatentTarget { chol_l, roles })
    }

    pub fn field(&self, v: &[f64]) -> Vec<f64> {
        (&self.chol_l * DVector::from_column_slice(v)).iter().copied().collect()
    }

    pub fn whiten(&self, h: &[f64]) -> Vec<f64> {
        self.chol_l
            .solve_lower_triangular(&DVector::from_column_slice(h))
            .expect("nonsingular factor")
            .iter()
            .copied()
            .collect()
    }
}

impl Target for LatentTarget {
    fn dim(&self) -> usize {
        self.roles.len()
    }

    fn log_density_and_grad(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let h = self.field(v);
        let mut lp = -0.5 * v.iter().map(|x| x * x).sum::<f64>();
        let mut dh = DVector::zeros(h.len());
        for (i, (&hi, role)) in h.iter().zip(&self.roles).enumerate() {
            match role {
                Role::Center => {
                    lp += log_sigmoid(hi);
                    dh[i] = sigmoid(-hi);
                }
                Role::Thinned => {
                    lp += log_sigmoid(-hi);
                    dh[i] = -sigmoid(hi);
                }
                Role::Free => {}
            }
        }
        let back = self.chol_l.tr_mul(&dh);
        for ((g, vi), b) in grad.iter_mut().zip(v).zip(back.iter()) {
            *g = -vi + b;
        }
        lp
    }
}

/// The latent function at a set of locations, enough to reconstruct its
/// conditional mean anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct HSnapshot {
    pub gp: GpHyper,
    pub locations: Vec<f64>,
    pub h: Vec<f64>,
}

impl HSnapshot {
    pub fn mean_on(&self, grid: &[f64]) -> Result<Vec<f64>> {
        let cond = Conditioned::new(self.gp, &self.locations, &self.h)?;
        Ok(grid.iter().map(|&x| cond.mean(x)).collect())
    }
}

/// `lambda_hat(c) = (1/S) sum_s lambda* sigmoid(E[h | snapshot s](c))` on `grid`.
pub fn intensity_point_estimate(snapshots: &[HSnapshot], lambda_star: f64, grid: &[f64]) -> Result<PiecewiseLinearFn> {
    if snapshots.is_empty() {
        return Err(Error::Empty("h snapshots"));
    }
    let mut acc = vec![0.0; grid.len()];
    for snap in snapshots {
        for (a, m) in acc.iter_mut().zip(snap.mean_on(grid)?) {
            *a += sigmoid(m);
        }
    }
    let s = snapshots.len() as f64;
    // Keep the estimate strictly positive so log-intensities stay finite.
    let values = acc.into_iter().map(|a| lambda_star * (a / s).max(1e-12)).collect();
    PiecewiseLinearFn::new(grid.to_vec(), values)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThinnedStats {
    pub births_accepted: usize,
    pub deaths_accepted: usize,
    pub moves_proposed: usize,
    pub moves_accepted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgcpState {
    pub region: Region,
    pub lambda_star: f64,
    pub gp: GpHyper,
    pub thinned: Vec<f64>,
    pub centers: Vec<f64>,
    /// `h` at `thinned` followed by `h` at `centers`.
    pub h: Vec<f64>,
}

impl SgcpState {
    /// No thinned events and a prior draw of `h` at `centers`.
    pub fn new<R: Rng + ?Sized>(
        region: Region,
        lambda_star: f64,
        gp: GpHyper,
        centers: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        require_positive("lambda_star", lambda_star)?;
        gp.validate()?;
        let h = gp.sample_prior(centers, rng)?;
        Ok(SgcpState {
            region,
            lambda_star,
            gp,
            thinned: Vec::new(),
            centers: centers.to_vec(),
            h,
        })
    }

    pub fn num_thinned(&self) -> usize {
        self.thinned.len()
    }

    pub fn locations(&self) -> Vec<f64> {
        let mut v = self.thinned.clone();
        v.extend(&self.centers);
        v
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.h.len() != self.thinned.len() + self.centers.len() {
            return Err(Error::InvalidState(format!(
                "h has {} values for {} thinned events and {} centers",
                self.h.len(),
                self.thinned.len(),
                self.centers.len()
            )));
        }
        if let Some(t) = self.thinned.iter().find(|&&t| !self.region.contains(t)) {
            return Err(Error::InvalidState(format!("thinned event {t} outside region")));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidState("non-finite latent value".into()));
        }
        Ok(())
    }

    /// GP conditioned on the current latent values.
    pub fn field(&self) -> Result<Conditioned> {
        Conditioned::new(self.gp, &self.locations(), &self.h)
    }

    pub fn snapshot(&self) -> HSnapshot {
        HSnapshot {
            gp: self.gp,
            locations: self.locations(),
            h: self.h.clone(),
        }
    }

    /// Move the center block to `centers`. Centers already present keep their
    /// latent value; new ones are drawn one at a time from the GP conditional
    /// on everything known so far, so `h` stays a draw of a single function.
    pub fn sync_centers<R: Rng + ?Sized>(&mut self, centers: &[f64], rng: &mut R) -> Result<()> {
        let m = self.thinned.len();
        let mut known = GramFactor::new(self.gp, &self.locations())?;
        let mut known_h = self.h.clone();
        let mut new_h = Vec::with_capacity(centers.len());
        for &c in centers {
            if let Some(j) = self.centers.iter().position(|&old| old == c) {
                new_h.push(self.h[m + j]);
                continue;
            }
            let v = draw(known.conditional(&known_h, c), rng);
            known.insert(known_h.len(), c)?;
            known_h.push(v);
            new_h.push(v);
        }
        self.h.truncate(m);
        self.h.extend(new_h);
        self.centers = centers.to_vec();
        debug_assert_eq!(self.h.len(), self.thinned.len() + self.centers.len());
        Ok(())
    }

    /// One sweep over the thinned events: birth/death moves on their number,
    /// then a random-walk move of each location.
    pub fn update_thinned_events<R: Rng + ?Sized>(&mut self, config: &SgcpConfig, rng: &mut R) -> Result<ThinnedStats> {
        let mut stats = ThinnedStats::default();
        let mass = self.lambda_star * self.region.length();
        // Tracks `locations()` through every accepted move.
        let mut factor = GramFactor::new(self.gp, &self.locations())?;
        for _ in 0..config.thinned_birth_death_per_sweep {
            let m = self.thinned.len();
            if rng.random::<f64>() < 0.5 {
                let loc = self.region.lo + rng.random::<f64>() * self.region.length();
                let h_new = draw(factor.conditional(&self.h, loc), rng);
                let log_a = mass.ln() + log_sigmoid(-h_new) - ((m + 1) as f64).ln();
                if accept(log_a, rng) {
                    self.thinned.push(loc);
                    self.h.insert(m, h_new);
                    factor.insert(m, loc)?;
                    stats.births_accepted += 1;
                }
            } else if m > 0 {
                let i = rng.random_range(0..m);
                let log_a = (m as f64).ln() - mass.ln() - log_sigmoid(-self.h[i]);
                if accept(log_a, rng) {
                    self.thinned.remove(i);
                    self.h.remove(i);
                    factor = factor.without(i);
                    stats.deaths_accepted += 1;
                }
            }
        }

        let sd = config.perturb_fraction * self.region.length();
        for i in 0..self.thinned.len() {
            stats.moves_proposed += 1;
            let z: f64 = StandardNormal.sample(rng);
            let proposal = self.thinned[i] + sd * z;
            if !self.region.contains(proposal) {
                continue;
            }
            let mut rest = factor.without(i);
            let mut rest_h = self.h.clone();
            rest_h.remove(i);
            let h_new = draw(rest.conditional(&rest_h, proposal), rng);
            let log_a = log_sigmoid(-h_new) - log_sigmoid(-self.h[i]);
            if accept(log_a, rng) {
                self.thinned[i] = proposal;
                self.h[i] = h_new;
                rest.insert(i, proposal)?;
                factor = rest;
                stats.moves_accepted += 1;
            }
        }
        Ok(stats)
    }

    /// One whitened HMC update of `h`. With `data_free` every value is
    /// treated as [`Role::Free`] and the update targets the GP prior.
    pub fn update_h<R: Rng + ?Sized>(
        &mut self,
        config: &SgcpConfig,
        data_free: bool,
        rng: &mut R,
    ) -> Result<HmcOutcome> {
        let m = self.thinned.len();
        let roles = (0..self.h.len())
            .map(|i| match (data_free, i < m) {
                (true, _) => Role::Free,
                (false, true) => Role::Thinned,
                (false, false) => Role::Center,
            })
            .collect();
        let target = LatentTarget::new(&self.gp, &self.locations(), roles)?;
        let mut v = target.whiten(&self.h);
        let eps = config.h_step_size * rng.random_range(0.8..1.2);
        let out = hmc_step(&target, &mut v, eps, config.h_leapfrog, rng);
        if out.accepted {
            self.h = target.field(&v);
        }
        Ok(out)
    }
}

fn draw<R: Rng + ?Sized>((mean, var): (f64, f64), rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + var.sqrt() * z
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> bool {
    assert!(!log_a.is_nan(), "NaN in Metropolis ratio");
    log_a >= 0.0 || rng.random::<f64>().ln() < log_a
}
