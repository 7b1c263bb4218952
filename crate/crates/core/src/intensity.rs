//! Poisson process intensities over hidden-unit centers, prior sampling of
//! whole networks and the prior log density.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::error::{require_positive, Error, Result};
use crate::gp::GpHyper;
use crate::network::{log_normal_pdf, Hyperparams, NetworkState, Region};
use crate::stats::normal_cdf;

#[inline]
pub fn sigmoid(h: f64) -> f64 {
    if h >= 0.0 {
        1.0 / (1.0 + (-h).exp())
    } else {
        let e = h.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(h))` without overflow for large `|h|`.
#[inline]
pub fn log_sigmoid(h: f64) -> f64 {
    if h >= 0.0 {
        -(-h).exp().ln_1p()
    } else {
        h - h.exp().ln_1p()
    }
}

/// Continuous piecewise-linear function through sorted knots; constant
/// beyond the first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearFn {
    positions: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearFn {
    pub fn new(positions: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if positions.is_empty() || positions.len() != values.len() {
            return Err(Error::InvalidParameter {
                name: "knots",
                reason: format!(
                    "need equally many (>=1) positions and values, got {} and {}",
                    positions.len(),
                    values.len()
                ),
            });
        }
        if positions
            .windows(2)
            .any(|w| w[0].is_nan() || w[1].is_nan() || w[0] >= w[1])
        {
            return Err(Error::InvalidParameter {
                name: "knots",
                reason: "positions must be strictly increasing".into(),
            });
        }
        if values.iter().chain(&positions).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "knots",
                reason: "non-finite knot".into(),
            });
        }
        Ok(PiecewiseLinearFn { positions, values })
    }

    pub fn constant(region: &Region, value: f64) -> Self {
        PiecewiseLinearFn {
            positions: vec![region.lo, region.hi],
            values: vec![value, value],
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Index `i` of the segment `[p_i, p_{i+1})` holding `x`, or `None` outside the knots.
    fn segment(&self, x: f64) -> Option<usize> {
        let n = self.positions.len();
        if n < 2 || x < self.positions[0] || x > self.positions[n - 1] {
            return None;
        }
        let i = self.positions.partition_point(|&p| p <= x);
        Some(i.saturating_sub(1).min(n - 2))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.positions.len();
        match self.segment(x) {
            Some(i) => {
                let (x0, x1) = (self.positions[i], self.positions[i + 1]);
                let t = (x - x0) / (x1 - x0);
                self.values[i] + t * (self.values[i + 1] - self.values[i])
            }
            None if x < self.positions[0] => self.values[0],
            None => self.values[n - 1],
        }
    }

    /// Slope at `x`. At an interior knot this is the slope of the segment to
    /// its right; at the last knot, of the segment to its left.
    pub fn slope(&self, x: f64) -> f64 {
        match self.segment(x) {
            Some(i) => (self.values[i + 1] - self.values[i]) / (self.positions[i + 1] - self.positions[i]),
            None => 0.0,
        }
    }

    /// Integral over `[lo, hi]`, extending the end values as constants.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let mut pts = vec![lo];
        pts.extend(self.positions.iter().copied().filter(|&p| p > lo && p < hi));
        pts.push(hi);
        pts.windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .sum()
    }

    /// Draw from the density proportional to this (nonnegative) function on `region`.
    pub fn sample<R: Rng + ?Sized>(&self, region: &Region, rng: &mut R) -> f64 {
        let mut pts = vec![region.lo];
        pts.extend(
            self.positions
                .iter()
                .copied()
                .filter(|&p| p > region.lo && p < region.hi),
        );
        pts.push(region.hi);
        let masses: Vec<f64> = pts
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.eval(w[0]) + self.eval(w[1])))
            .collect();
        let total: f64 = masses.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut seg = masses.len() - 1;
        for (i, m) in masses.iter().enumerate() {
            if u < *m {
                seg = i;
                break;
            }
            u -= m;
        }
        let (x0, x1) = (pts[seg], pts[seg + 1]);
        let (f0, f1) = (self.eval(x0), self.eval(x1));
        // Invert the CDF of a linear density on [x0, x1].
        let v: f64 = rng.random();
        let width = x1 - x0;
        let t = if (f1 - f0).abs() <= 1e-12 * (f0 + f1).max(1e-300) {
            v
        } else {
            let a = f1 - f0;
            let disc = f0 * f0 + v * (f1 * f1 - f0 * f0);
            (disc.max(0.0).sqrt() - f0) / a
        };
        (x0 + t.clamp(0.0, 1.0) * width).clamp(region.lo, region.hi)
    }
}

/// Shape of the intensity function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum IntensityKind {
    Homogeneous {
        level: f64,
    },
    /// `levels[i]` on the `i`-th piece delimited by the interior `breaks`.
    PiecewiseConstant {
        breaks: Vec<f64>,
        levels: Vec<f64>,
    },
    /// `base + amplitude * exp(-(c - mean)^2 / (2 width^2))`.
    GaussianBump {
        base: f64,
        amplitude: f64,
        mean: f64,
        width: f64,
    },
    /// Sigmoidal Gaussian Cox process. Pointwise evaluation goes through the
    /// Monte Carlo estimate `estimate`; prior draws use the exact thinning
    /// construction with a fresh latent function.
    Sgcp {
        lambda_star: f64,
        gp: GpHyper,
        estimate: PiecewiseLinearFn,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityModel {
    pub region: Region,
    pub kind: IntensityKind,
}

impl IntensityModel {
    pub fn homogeneous(region: Region, level: f64) -> Self {
        IntensityModel {
            region,
            kind: IntensityKind::Homogeneous { level },
        }
    }

    /// SGCP intensity whose point estimate starts flat at `lambda_star / 2`.
    pub fn sgcp(region: Region, lambda_star: f64, gp: GpHyper) -> Self {
        IntensityModel {
            region,
            kind: IntensityKind::Sgcp {
                lambda_star,
                gp,
                estimate: PiecewiseLinearFn::constant(&region, 0.5 * lambda_star),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        Region::new(self.region.lo, self.region.hi)?;
        match &self.kind {
            IntensityKind::Homogeneous { level } => require_positive("lambda", *level),
            IntensityKind::PiecewiseConstant { breaks, levels } => {
                if levels.len() != breaks.len() + 1 {
                    return Err(Error::InvalidParameter {
                        name: "levels",
                        reason: "need exactly one more level than breaks".into(),
                    });
                }
                let mut prev = self.region.lo;
                for &b in breaks {
                    if !(b > prev && b < self.region.hi) {
                        return Err(Error::InvalidParameter {
                            name: "breaks",
                            reason: "breaks must be increasing and inside the region".into(),
                        });
                    }
                    prev = b;
                }
                levels.iter().try_for_each(|l| require_positive("level", *l))
            }
            IntensityKind::GaussianBump {
                base,
                amplitude,
                width,
                mean,
            } => {
                require_positive("base", *base)?;
                require_positive("width", *width)?;
                if !(amplitude.is_finite() && *amplitude >= 0.0 && mean.is_finite()) {
                    return Err(Error::InvalidParameter {
                        name: "amplitude",
                        reason: "amplitude must be finite and nonnegative".into(),
                    });
                }
                Ok(())
            }
            IntensityKind::Sgcp {
                lambda_star,
                gp,
                estimate,
            } => {
                require_positive("lambda_star", *lambda_star)?;
                gp.validate()?;
                if estimate.values().iter().any(|v| v.is_nan() || *v <= 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "estimate",
                        reason: "intensity estimate must be strictly positive".into(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, IntensityKind::Homogeneous { .. })
    }

    /// `lambda(c)`.
    pub fn value(&self, c: f64) -> f64 {
        match &self.kind {
            IntensityKind::Homogeneous { level } => *level,
            IntensityKind::PiecewiseConstant { breaks, levels } => levels[breaks.partition_point(|&b| b <= c)],
            IntensityKind::GaussianBump {
                base,
                amplitude,
                mean,
                width,
            } => {
                let z = (c - mean) / width;
                base + amplitude * (-0.5 * z * z).exp()
            }
            IntensityKind::Sgcp { estimate, .. } => estimate.eval(c),
        }
    }

    /// `(log lambda(c), d/dc log lambda(c))`.
    pub fn log_value_and_slope(&self, c: f64) -> (f64, f64) {
        match &self.kind {
            IntensityKind::Homogeneous { level } => (level.ln(), 0.0),
            IntensityKind::PiecewiseConstant { .. } => (self.value(c).ln(), 0.0),
            IntensityKind::GaussianBump {
                base,
                amplitude,
                mean,
                width,
            } => {
                let z = (c - mean) / width;
                let bump = amplitude * (-0.5 * z * z).exp();
                let v = base + bump;
                (v.ln(), -bump * z / width / v)
            }
            IntensityKind::Sgcp { estimate, .. } => {
                let v = estimate.eval(c);
                (v.ln(), estimate.slope(c) / v)
            }
        }
    }

    /// `Lambda = integral of lambda over the region`.
    pub fn total_mass(&self) -> f64 {
        let r = &self.region;
        match &self.kind {
            IntensityKind::Homogeneous { level } => level * r.length(),
            IntensityKind::PiecewiseConstant { breaks, levels } => {
                let mut edges = vec![r.lo];
                edges.extend(breaks);
                edges.push(r.hi);
                edges.windows(2).zip(levels).map(|(w, l)| (w[1] - w[0]) * l).sum()
            }
            IntensityKind::GaussianBump {
                base,
                amplitude,
                mean,
                width,
            } => {
                let gauss = normal_cdf((r.hi - mean) / width) - normal_cdf((r.lo - mean) / width);
                base * r.length() + amplitude * width * (2.0 * std::f64::consts::PI).sqrt() * gauss
            }
            IntensityKind::Sgcp { estimate, .. } => estimate.integral(r.lo, r.hi),
        }
    }

    /// Draw a location with density `lambda(c) / Lambda` on the region.
    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let r = &self.region;
        match &self.kind {
            IntensityKind::Homogeneous { .. } => r.lo + rng.random::<f64>() * r.length(),
            IntensityKind::PiecewiseConstant { breaks, levels } => {
                let mut edges = vec![r.lo];
                edges.extend(breaks);
                edges.push(r.hi);
                let masses: Vec<f64> = edges.windows(2).zip(levels).map(|(w, l)| (w[1] - w[0]) * l).collect();
                let mut u = rng.random::<f64>() * masses.iter().sum::<f64>();
                let mut piece = masses.len() - 1;
                for (i, m) in masses.iter().enumerate() {
                    if u < *m {
                        piece = i;
                        break;
                    }
                    u -= m;
                }
                edges[piece] + rng.random::<f64>() * (edges[piece + 1] - edges[piece])
            }
            IntensityKind::GaussianBump { base, mean, width, .. } => {
                let uniform_mass = base * r.length();
                if rng.random::<f64>() * self.total_mass() < uniform_mass {
                    r.lo + rng.random::<f64>() * r.length()
                } else {
                    let std = NormalCdf::new(0.0, 1.0).expect("standard normal");
                    let a = normal_cdf((r.lo - mean) / width);
                    let b = normal_cdf((r.hi - mean) / width);
                    let u = a + rng.random::<f64>() * (b - a);
                    (mean + width * std.inverse_cdf(u)).clamp(r.lo, r.hi)
                }
            }
            IntensityKind::Sgcp { estimate, .. } => estimate.sample(r, rng),
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean.is_nan() || mean <= 0.0 {
        return 0;
    }
    let k: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    k as usize
}

/// Draw a network from the prior: `K ~ Poisson(Lambda)`, centers from
/// `lambda / Lambda`, `s_k^2 = s0^2 lambda(c_k)^2`, Gaussian weights and bias.
///
/// For an SGCP intensity the latent function is drawn afresh by thinning:
/// `Poisson(lambda* |C|)` uniform candidates, a joint GP draw at them, and
/// each candidate kept with probability `sigmoid(h)`.
pub fn sample_prior_network<R: Rng + ?Sized>(
    hyper: &Hyperparams,
    intensity: &IntensityModel,
    rng: &mut R,
) -> Result<NetworkState> {
    let weight_dist = Normal::new(0.0, hyper.weight_prior_var().sqrt()).expect("valid sd");
    let bias = Normal::new(0.0, hyper.sigma_b_sq.sqrt()).expect("valid sd").sample(rng);
    let mut state = NetworkState::empty(bias);
    match &intensity.kind {
        IntensityKind::Sgcp { lambda_star, gp, .. } => {
            let region = intensity.region;
            let n = sample_poisson(lambda_star * region.length(), rng);
            let candidates: Vec<f64> = (0..n)
                .map(|_| region.lo + rng.random::<f64>() * region.length())
                .collect();
            let h = gp.sample_prior(&candidates, rng)?;
            for (c, h) in candidates.into_iter().zip(h) {
                let level = lambda_star * sigmoid(h);
                if rng.random::<f64>() < sigmoid(h) {
                    state.push_unit(weight_dist.sample(rng), c, hyper.scale_for(level));
                }
            }
        }
        _ => {
            let k = sample_poisson(intensity.total_mass(), rng);
            for _ in 0..k {
                let c = intensity.sample_location(rng);
                let s = hyper.scale_for(intensity.value(c));
                state.push_unit(weight_dist.sample(rng), c, s);
            }
        }
    }
    Ok(state)
}

/// Recompute every scale from the intensity at its center.
pub fn refresh_scales(state: &mut NetworkState, hyper: &Hyperparams, intensity: &IntensityModel) {
    for (s, &c) in state.scales.iter_mut().zip(&state.centers) {
        *s = hyper.scale_for(intensity.value(c));
    }
}

/// Poisson process part of the prior: `-Lambda + sum_k log lambda(c_k)`,
/// or `-inf` if any center leaves the region.
pub fn log_pp_density(centers: &[f64], intensity: &IntensityModel) -> f64 {
    if centers.iter().any(|&c| !intensity.region.contains(c)) {
        return f64::NEG_INFINITY;
    }
    -intensity.total_mass() + centers.iter().map(|&c| intensity.log_value_and_slope(c).0).sum::<f64>()
}

/// Full prior log density of a network, normalizing constants included so
/// values are comparable across widths.
pub fn log_prior(state: &NetworkState, hyper: &Hyperparams, intensity: &IntensityModel) -> f64 {
    let pp = log_pp_density(&state.centers, intensity);
    if pp == f64::NEG_INFINITY {
        return pp;
    }
    let wv = hyper.weight_prior_var();
    pp + state.weights.iter().map(|&w| log_normal_pdf(w, 0.0, wv)).sum::<f64>()
        + log_normal_pdf(state.bias, 0.0, hyper.sigma_b_sq)
}

/// Draw `lambda^2 ~ Gamma(shape = alpha, rate = beta)` and return `lambda`.
pub fn sample_gamma_level<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> Result<f64> {
    require_positive("gamma_alpha", alpha)?;
    require_positive("gamma_beta", beta)?;
    let g: f64 = Gamma::new(alpha, 1.0 / beta)
        .map_err(|e| Error::InvalidParameter {
            name: "gamma",
            reason: e.to_string(),
        })?
        .sample(rng);
    Ok(g.sqrt())
}
