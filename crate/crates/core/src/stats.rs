//! Small statistical toolkit: distribution functions and the goodness-of-fit
//! tests used to validate samplers against their oracles.

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

/// Standard normal CDF through `erfc`, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let i = pos.floor() as usize;
    let t = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + t * (sorted[i + 1] - sorted[i])
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

/// Chi-square goodness of fit of integer counts against `Poisson(mean)`.
/// Bins are merged from both tails until each expects at least five counts.
pub fn poisson_chi_square_pvalue(counts: &[usize], poisson_mean: f64) -> f64 {
    let n = counts.len() as f64;
    let dist = Poisson::new(poisson_mean).expect("positive mean");
    let max_k = counts.iter().copied().max().unwrap_or(0);
    let upper = max_k.max((poisson_mean + 10.0 * poisson_mean.sqrt() + 10.0) as usize);
    let mut observed = vec![0.0; upper + 1];
    for &c in counts {
        observed[c] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=upper).map(|k| n * dist.pmf(k as u64)).collect();
    // Fold the mass beyond `upper` into the last bin.
    let tail = n - expected.iter().sum::<f64>();
    *expected.last_mut().unwrap() += tail.max(0.0);
    chi_square_merged(&observed, &expected, 0)
}

/// Chi-square statistic after merging adjacent bins until each expected
/// count is at least 5. Returns the upper-tail p-value with
/// `bins - 1 - fitted_params` degrees of freedom.
pub fn chi_square_merged(observed: &[f64], expected: &[f64], fitted_params: usize) -> f64 {
    let (o, e) = merge_bins(observed, expected, 5.0);
    let stat: f64 = o.iter().zip(&e).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (o.len() as f64 - 1.0 - fitted_params as f64).max(1.0);
    ChiSquared::new(dof).expect("positive dof").sf(stat)
}

fn merge_bins(observed: &[f64], expected: &[f64], min_expected: f64) -> (Vec<f64>, Vec<f64>) {
    let mut o_out = Vec::new();
    let mut e_out = Vec::new();
    let (mut o_acc, mut e_acc) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= min_expected {
            o_out.push(o_acc);
            e_out.push(e_acc);
            o_acc = 0.0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0.0 {
        if let (Some(lo), Some(le)) = (o_out.last_mut(), e_out.last_mut()) {
            *lo += o_acc;
            *le += e_acc;
        } else {
            o_out.push(o_acc);
            e_out.push(e_acc);
        }
    }
    (o_out, e_out)
}

/// Two-sample chi-square homogeneity test on integer-valued samples.
pub fn two_sample_chi_square_pvalue(a: &[usize], b: &[usize]) -> f64 {
    let max = a.iter().chain(b).copied().max().unwrap_or(0);
    let mut ca = vec![0.0; max + 1];
    let mut cb = vec![0.0; max + 1];
    a.iter().for_each(|&k| ca[k] += 1.0);
    b.iter().for_each(|&k| cb[k] += 1.0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    // Merge on pooled counts so both rows have adequate expectations.
    let mut bins_a = Vec::new();
    let mut bins_b = Vec::new();
    let (mut acc_a, mut acc_b) = (0.0, 0.0);
    for k in 0..=max {
        acc_a += ca[k];
        acc_b += cb[k];
        let pooled = acc_a + acc_b;
        if pooled * na.min(nb) / total >= 5.0 {
            bins_a.push(acc_a);
            bins_b.push(acc_b);
            acc_a = 0.0;
            acc_b = 0.0;
        }
    }
    if acc_a + acc_b > 0.0 {
        if let (Some(x), Some(y)) = (bins_a.last_mut(), bins_b.last_mut()) {
            *x += acc_a;
            *y += acc_b;
        } else {
            bins_a.push(acc_a);
            bins_b.push(acc_b);
        }
    }
    if bins_a.len() < 2 {
        return 1.0;
    }
    let mut stat = 0.0;
    for (x, y) in bins_a.iter().zip(&bins_b) {
        let pooled = x + y;
        let ea = pooled * na / total;
        let eb = pooled * nb / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    ChiSquared::new(bins_a.len() as f64 - 1.0)
        .expect("positive dof")
        .sf(stat)
}

/// Kolmogorov-Smirnov statistic `sup |F_n - F|` for a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS p-value with the Stephens small-sample correction.
pub fn ks_pvalue(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let d = ks_statistic(samples, cdf);
    let sn = (samples.len() as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
