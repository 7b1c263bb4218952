//! Squared-exponential Gaussian process helpers for the latent intensity function.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub variance: f64,
    pub lengthscale: f64,
}

impl GpHyper {
    /// Default latent GP for a region of the given length: unit variance and
    /// lengthscale `0.2 * length`.
    pub fn for_region_length(length: f64) -> Self {
        GpHyper {
            variance: 1.0,
            lengthscale: 0.2 * length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("gp.variance", self.variance)?;
        require_positive("gp.lengthscale", self.lengthscale)
    }

    #[inline]
    pub fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.lengthscale;
        self.variance * (-0.5 * d * d).exp()
    }

    pub fn gram(&self, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), xs.len(), |i, j| self.kernel(xs[i], xs[j]))
    }

    pub fn cross(&self, rows: &[f64], cols: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.kernel(rows[i], cols[j]))
    }

    /// Cholesky factor of the Gram matrix over `xs`, jittered as needed.
    pub fn cholesky(&self, xs: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        jittered_cholesky(self.gram(xs), self.variance)
    }

    /// Joint draw of the GP prior at `xs`.
    pub fn sample_prior<R: Rng + ?Sized>(&self, xs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let chol = self.cholesky(xs)?;
        let z = standard_normal_vec(xs.len(), rng);
        Ok((chol.l() * z).iter().copied().collect())
    }
}

/// Cholesky with a diagonal jitter schedule `1e-10 * variance`, growing by
/// a factor of ten up to `1e-6 * variance`.
pub fn jittered_cholesky(gram: DMatrix<f64>, variance: f64) -> Result<Cholesky<f64, Dyn>> {
    jittered_cholesky_with_jitter(gram, variance).map(|(chol, _)| chol)
}

/// [`jittered_cholesky`], also returning the jitter that succeeded.
pub fn jittered_cholesky_with_jitter(gram: DMatrix<f64>, variance: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = gram.nrows();
    let mut jitter = 1e-10 * variance;
    let max_jitter = 1e-6 * variance;
    loop {
        let mut m = gram.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        if jitter >= max_jitter * (1.0 - 1e-12) {
            return Err(Error::Cholesky { size: n, jitter });
        }
        jitter = (jitter * 10.0).min(max_jitter);
    }
}

/// Cholesky factor of the jittered Gram matrix over a changing set of
/// locations. Insertions and removals cost `O(n^2)` instead of a fresh
/// factorization; the jitter is fixed at whatever the initial factorization needed.
#[derive(Debug, Clone)]
pub struct GramFactor {
    gp: GpHyper,
    locations: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    jitter: f64,
}

impl GramFactor {
    pub fn new(gp: GpHyper, locations: &[f64]) -> Result<Self> {
        if locations.is_empty() {
            return Ok(GramFactor {
                gp,
                locations: Vec::new(),
                chol: None,
                jitter: 1e-10 * gp.variance,
            });
        }
        let (chol, jitter) = jittered_cholesky_with_jitter(gp.gram(locations), gp.variance)?;
        Ok(GramFactor {
            gp,
            locations: locations.to_vec(),
            chol: Some(chol),
            jitter,
        })
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    /// Mean and variance at `at` of the GP conditioned on `values` at the
    /// factored locations.
    pub fn conditional(&self, values: &[f64], at: f64) -> (f64, f64) {
        debug_assert_eq!(values.len(), self.locations.len());
        let Some(chol) = &self.chol else {
            return (0.0, self.gp.variance);
        };
        let l = chol.l_dirty();
        let mut k = DVector::from_iterator(
            self.locations.len(),
            self.locations.iter().map(|&x| self.gp.kernel(at, x)),
        );
        let mut w = DVector::from_column_slice(values);
        l.solve_lower_triangular_mut(&mut k);
        l.solve_lower_triangular_mut(&mut w);
        (k.dot(&w), (self.gp.variance - k.norm_squared()).max(0.0))
    }

    /// The factor with location `i` dropped.
    pub fn without(&self, i: usize) -> Self {
        let mut locations = self.locations.clone();
        locations.remove(i);
        let chol = match &self.chol {
            Some(c) if !locations.is_empty() => Some(c.remove_column(i)),
            _ => None,
        };
        GramFactor {
            gp: self.gp,
            locations,
            chol,
            jitter: self.jitter,
        }
    }

    /// Insert location `at` at index `j`, refactoring from scratch if the
    /// update loses positive definiteness.
    pub fn insert(&mut self, j: usize, at: f64) -> Result<()> {
        self.locations.insert(j, at);
        let col = DVector::from_iterator(
            self.locations.len(),
            self.locations
                .iter()
                .enumerate()
                .map(|(i, &x)| self.gp.kernel(at, x) + if i == j { self.jitter } else { 0.0 }),
        );
        let updated = match &self.chol {
            Some(c) => c.insert_column(j, col),
            None => match Cholesky::new(DMatrix::from_element(1, 1, col[0])) {
                Some(c) => c,
                None => return self.refactor(),
            },
        };
        if updated.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
            self.chol = Some(updated);
            Ok(())
        } else {
            self.refactor()
        }
    }

    fn refactor(&mut self) -> Result<()> {
        *self = GramFactor::new(self.gp, &self.locations)?;
        Ok(())
    }
}

pub(crate) fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// A GP conditioned on exact values at a set of locations.
#[derive(Debug, Clone)]
pub struct Conditioned {
    gp: GpHyper,
    locations: Vec<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl Conditioned {
    pub fn new(gp: GpHyper, locations: &[f64], values: &[f64]) -> Result<Self> {
        debug_assert_eq!(locations.len(), values.len());
        if locations.is_empty() {
            return Ok(Conditioned {
                gp,
                locations: Vec::new(),
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let chol = gp.cholesky(locations)?;
        let alpha = chol.solve(&DVector::from_column_slice(values));
        Ok(Conditioned {
            gp,
            locations: locations.to_vec(),
            chol: Some(chol),
            alpha,
        })
    }

    pub fn mean(&self, at: f64) -> f64 {
        self.locations
            .iter()
            .zip(self.alpha.iter())
            .map(|(&l, a)| self.gp.kernel(at, l) * a)
            .sum()
    }

    /// Conditional mean vector and covariance matrix at `at`.
    pub fn moments(&self, at: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let prior = self.gp.gram(at);
        match &self.chol {
            None => (DVector::zeros(at.len()), prior),
            Some(chol) => {
                let cross = self.gp.cross(&self.locations, at);
                let mean = cross.transpose() * &self.alpha;
                let v = chol.l().solve_lower_triangular(&cross).expect("triangular solve");
                let cov = prior - v.transpose() * v;
                (mean, cov)
            }
        }
    }

    /// Joint conditional draw at `at`.
    pub fn sample<R: Rng + ?Sized>(&self, at: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        if at.is_empty() {
            return Ok(Vec::new());
        }
        let (mean, cov) = self.moments(at);
        let chol = jittered_cholesky(cov, self.gp.variance)?;
        let z = standard_normal_vec(at.len(), rng);
        Ok((mean + chol.l() * z).iter().copied().collect())
    }

    /// Conditional mean and variance at a single location.
    pub fn point(&self, at: f64) -> (f64, f64) {
        let (m, c) = self.moments(&[at]);
        (m[0], c[(0, 0)].max(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditional_interpolates_and_shrinks_variance() {
        let gp = GpHyper {
            variance: 2.0,
            lengthscale: 0.5,
        };
        let cond = Conditioned::new(gp, &[0.0, 1.0], &[1.0, -0.5]).unwrap();
        let (m, v) = cond.point(0.0);
        assert!((m - 1.0).abs() < 1e-6);
        assert!(v < 1e-6);
        let (m_far, v_far) = cond.point(50.0);
        assert!(m_far.abs() < 1e-12);
        assert!((v_far - 2.0).abs() < 1e-9);
    }

    #[test]
    fn gram_factor_updates_match_direct_conditioning() {
        use rand::RngExt;
        let gp = GpHyper {
            variance: 1.3,
            lengthscale: 0.7,
        };
        let mut rng = crate::rng_from_seed(5, 0);
        let mut locs: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..5.0)).collect();
        let mut factor = GramFactor::new(gp, &locs).unwrap();
        for step in 0..40 {
            if step % 3 == 0 && locs.len() > 1 {
                let i = rng.random_range(0..locs.len());
                locs.remove(i);
                factor = factor.without(i);
            } else {
                let j = rng.random_range(0..=locs.len());
                let x = rng.random_range(0.0..5.0);
                locs.insert(j, x);
                factor.insert(j, x).unwrap();
            }
            assert_eq!(factor.locations(), &locs[..]);
            let vals: Vec<f64> = locs.iter().map(|x| x.sin()).collect();
            let at = rng.random_range(-1.0..6.0);
            let (m, v) = factor.conditional(&vals, at);
            let (m0, v0) = Conditioned::new(gp, &locs, &vals).unwrap().point(at);
            assert!((m - m0).abs() < 1e-6 && (v - v0).abs() < 1e-6, "{m} {m0} {v} {v0}");
        }
        let empty = GramFactor::new(gp, &[]).unwrap();
        assert_eq!(empty.conditional(&[], 1.0), (0.0, 1.3));
        let single = GramFactor::new(gp, &[2.0]).unwrap().without(0);
        assert_eq!(single.conditional(&[], 1.0), (0.0, 1.3));
    }

    #[test]
    fn empty_conditioning_is_the_prior() {
        let gp = GpHyper {
            variance: 1.5,
            lengthscale: 1.0,
        };
        let cond = Conditioned::new(gp, &[], &[]).unwrap();
        assert_eq!(cond.point(0.3), (0.0, 1.5));
    }

    #[test]
    fn duplicate_locations_need_jitter_but_factorize() {
        let gp = GpHyper {
            variance: 1.0,
            lengthscale: 1.0,
        };
        assert!(gp.cholesky(&[0.2, 0.2, 0.2]).is_ok());
    }

    #[test]
    fn prior_draw_has_kernel_variance() {
        let gp = GpHyper {
            variance: 0.7,
            lengthscale: 0.3,
        };
        let mut rng = crate::rng_from_seed(3, 0);
        let n = 20_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| gp.sample_prior(&[0.0, 0.1], &mut rng).unwrap()[1])
            .collect();
        let var = draws.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var - 0.7).abs() < 0.05, "{var}");
    }
}
