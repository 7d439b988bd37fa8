//! Distribution comparisons and sample statistics.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("sample dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// CDF of `N(0, sigma2)`.
pub fn normal_cdf(sigma2: f64) -> impl Fn(f64) -> f64 {
    let normal = Normal::new(0.0, sigma2.sqrt()).expect("positive variance");
    move |x| normal.cdf(x)
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup_x |F_n(x) - F(x)|` for a continuous reference CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let v = sorted(samples);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    Ok(d)
}

/// `sup_x |F_A(x) - F_B(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

fn mean_pair_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let total: f64 = a
        .par_iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
                .sum::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / (a.len() * b.len()) as f64
}

/// Energy distance `2E|X-Y| - E|X-X'| - E|Y-Y'|` (V-statistic, so exactly 0
/// for identical samples).
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, StatsError> {
    check_dims(a, b)?;
    let d = 2.0 * mean_pair_distance(a, b) - mean_pair_distance(a, a) - mean_pair_distance(b, b);
    Ok(d.max(0.0))
}

fn check_dims(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let dim = a[0].len();
    if let Some(bad) = a.iter().chain(b).find(|x| x.len() != dim) {
        return Err(StatsError::DimensionMismatch(dim, bad.len()));
    }
    Ok(dim)
}

/// Per-coordinate two-sample KS distances and the energy distance.
pub fn compare_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(Vec<f64>, f64), StatsError> {
    let dim = check_dims(a, b)?;
    let ks = (0..dim)
        .map(|c| {
            let xa: Vec<f64> = a.iter().map(|x| x[c]).collect();
            let xb: Vec<f64> = b.iter().map(|x| x[c]).collect();
            ks_two_sample(&xa, &xb)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((ks, energy_distance(a, b)?))
}

/// `E|Z|^p` for `Z ~ N(0, sigma^2)`: `sigma^p 2^{p/2} Gamma((p+1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(sigma: f64, p: f64) -> f64 {
    sigma.powf(p) * 2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Unbiased covariance matrix of row samples.
pub fn covariance(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let means: Vec<f64> = (0..d).map(|c| samples.iter().map(|s| s[c]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| samples.iter().map(|s| (s[i] - means[i]) * (s[j] - means[j])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect()
}

/// 3-sigma band of the one-sample KS statistic under the null, `3 sqrt(ln 2 / (2 n))`.
pub fn ks_band(n: usize) -> f64 {
    3.0 * (std::f64::consts::LN_2 / (2.0 * n as f64)).sqrt()
}
