//! Loading, normalizing and splitting one-dimensional regression data.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine maps applied by [`Dataset::normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_min: f64,
    pub x_max: f64,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Normalization {
    /// `x` onto `[0, 1]`; `y` centered and divided by its largest absolute deviation.
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
        let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if x_max <= x_min {
            return Err(Error::DegenerateRange(x_min));
        }
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let dev = y.iter().map(|v| (v - y_mean).abs()).fold(0.0, f64::max);
        Ok(Normalization {
            x_min,
            x_max,
            y_mean,
            y_scale: if dev > 0.0 { dev } else { 1.0 },
        })
    }

    pub fn x_forward(&self, x: f64) -> f64 {
        (x - self.x_min) / (self.x_max - self.x_min)
    }

    pub fn x_inverse(&self, x: f64) -> f64 {
        self.x_min + x * (self.x_max - self.x_min)
    }

    pub fn y_forward(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn y_inverse(&self, y: f64) -> f64 {
        self.y_mean + y * self.y_scale
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub normalization: Option<Normalization>,
    pub split: Option<Split>,
}

impl Dataset {
    /// A dataset with no observations: the likelihood is flat.
    pub fn empty() -> Self {
        Dataset {
            x: Vec::new(),
            y: Vec::new(),
            normalization: None,
            split: None,
        }
    }

    pub fn from_xy(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidParameter {
                name: "dataset",
                reason: format!("{} x values but {} y values", x.len(), y.len()),
            });
        }
        Ok(Dataset {
            x,
            y,
            normalization: None,
            split: None,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Parse a two-column `x,y` CSV file. A non-numeric first line is treated
    /// as a header; blank lines are skipped.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
            match parsed {
                Some(v) if v.len() == 2 => {
                    x.push(v[0]);
                    y.push(v[1]);
                }
                None if idx == 0 => continue,
                Some(v) => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        reason: format!("expected 2 columns, found {}", v.len()),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: line_no,
                        reason: format!("non-numeric value in `{line}`"),
                    })
                }
            }
        }
        if x.is_empty() {
            return Err(Error::Empty("csv file has no data rows"));
        }
        Dataset::from_xy(x, y)
    }

    /// Normalize with statistics computed on the full dataset.
    pub fn normalize(&self) -> Result<Self> {
        let norm = Normalization::fit(&self.x, &self.y)?;
        Ok(self.apply_normalization(norm))
    }

    /// Normalize every point with statistics from the training subset only.
    pub fn normalize_on_train(&self) -> Result<Self> {
        let train = self.train();
        let norm = Normalization::fit(&train.x, &train.y)?;
        Ok(self.apply_normalization(norm))
    }

    pub fn apply_normalization(&self, norm: Normalization) -> Self {
        Dataset {
            x: self.x.iter().map(|&v| norm.x_forward(v)).collect(),
            y: self.y.iter().map(|&v| norm.y_forward(v)).collect(),
            normalization: Some(norm),
            split: self.split.clone(),
        }
    }

    /// Undo [`Dataset::normalize`]; a raw dataset is returned unchanged.
    pub fn denormalize(&self) -> Self {
        match self.normalization {
            None => self.clone(),
            Some(norm) => Dataset {
                x: self.x.iter().map(|&v| norm.x_inverse(v)).collect(),
                y: self.y.iter().map(|&v| norm.y_inverse(v)).collect(),
                normalization: None,
                split: self.split.clone(),
            },
        }
    }

    /// Uniformly random train/test partition, deterministic in `seed`.
    /// The train size is `round(train_fraction * n)`, kept in `[1, n-1]` when `n >= 2`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::InvalidParameter {
                name: "train_fraction",
                reason: format!("must lie in (0, 1), got {train_fraction}"),
            });
        }
        let n = self.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = crate::rng_from_seed(seed, 0);
        idx.shuffle(&mut rng);
        let mut n_train = (train_fraction * n as f64).round() as usize;
        if n >= 2 {
            n_train = n_train.clamp(1, n - 1);
        }
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Dataset {
            split: Some(Split { train, test }),
            ..self.clone()
        })
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Dataset {
            x: indices.iter().map(|&i| self.x[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            normalization: self.normalization,
            split: None,
        }
    }

    /// Training subset, or the whole dataset when unsplit.
    pub fn train(&self) -> Self {
        match &self.split {
            Some(s) => self.subset(&s.train),
            None => Dataset {
                split: None,
                ..self.clone()
            },
        }
    }

    /// Test subset; empty when unsplit.
    pub fn test(&self) -> Self {
        match &self.split {
            Some(s) => self.subset(&s.test),
            None => Dataset {
                x: Vec::new(),
                y: Vec::new(),
                normalization: self.normalization,
                split: None,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_plain_and_headed_csv() {
        let plain = Dataset::load_csv(write_tmp("0,1\n1,2\n").path()).unwrap();
        assert_eq!(plain.x, vec![0.0, 1.0]);
        assert_eq!(plain.y, vec![1.0, 2.0]);
        let headed = Dataset::load_csv(write_tmp("x,y\n0,1\n1,2\n").path()).unwrap();
        assert_eq!(headed, plain);
    }

    #[test]
    fn reports_line_of_bad_cell() {
        let err = Dataset::load_csv(write_tmp("x,y\n0,1\n1,abc\n").path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_file() {
        assert!(matches!(Dataset::load_csv(write_tmp("").path()), Err(Error::Empty(_))));
        assert!(matches!(
            Dataset::load_csv(write_tmp("x,y\n").path()),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let d = Dataset::from_xy(vec![2.0, 4.0], vec![1.0, 3.0]).unwrap();
        let n = d.normalize().unwrap();
        assert_eq!(n.x, vec![0.0, 1.0]);
        assert_eq!(n.y, vec![-1.0, 1.0]);
        let flat = Dataset::from_xy(vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(flat.normalize(), Err(Error::DegenerateRange(_))));
    }

    #[test]
    fn train_only_statistics_ignore_test_points() {
        let d = Dataset::from_xy(vec![0.0, 1.0, 2.0, 10.0], vec![0.0, 1.0, 2.0, 50.0]).unwrap();
        let d = Dataset {
            split: Some(Split {
                train: vec![0, 1, 2],
                test: vec![3],
            }),
            ..d
        };
        let n = d.normalize_on_train().unwrap();
        assert_eq!(n.train().x, vec![0.0, 0.5, 1.0]);
        assert_eq!(n.x[3], 5.0);
        assert_eq!(n.train().y, vec![-1.0, 0.0, 1.0]);
        assert_eq!(n.split, d.split);
    }

    #[test]
    fn split_counts_and_determinism() {
        let d = Dataset::from_xy((0..100).map(f64::from).collect(), vec![0.0; 100]).unwrap();
        let a = d.split(0.75, 7).unwrap();
        let b = d.split(0.75, 7).unwrap();
        let s = a.split.as_ref().unwrap();
        assert_eq!((s.train.len(), s.test.len()), (75, 25));
        assert_eq!(a.split, b.split);
        assert_ne!(a.split, d.split(0.75, 8).unwrap().split);
        assert_eq!(a.train().len() + a.test().len(), 100);
        assert!(d.split(1.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_invariants(
            pts in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 2..60)
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            prop_assume!(x.iter().any(|v| *v != x[0]));
            let d = Dataset::from_xy(x, y).unwrap();
            let n = d.normalize().unwrap();
            prop_assert!(n.x.iter().all(|v| (0.0..=1.0).contains(v)));
            let mean = n.y.iter().sum::<f64>() / n.len() as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!(n.y.iter().all(|v| v.abs() <= 1.0 + 1e-12));
            let back = n.denormalize();
            for (a, b) in back.x.iter().zip(&d.x) { prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs())); }
            for (a, b) in back.y.iter().zip(&d.y) { prop_assert!((a - b).abs() < 1e-12 * (1.0 + b.abs())); }
        }

        #[test]
        fn split_is_a_partition(n in 2usize..200, frac in 0.05..0.95f64, seed in any::<u64>()) {
            let d = Dataset::from_xy(vec![0.0; n], vec![0.0; n]).unwrap();
            let s = d.split(frac, seed).unwrap().split.unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
