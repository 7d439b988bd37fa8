//! Statistical checks of the limit laws for Birkhoff sums
//! `phi_n = sum_{j<n} phi o T^j`, generic over the [`Driver`] producing the
//! sequence.
//!
//! Ensemble member `i` always runs on substream `(seed, i)` and results are
//! reduced in member order, so every report is a deterministic function of
//! its inputs regardless of thread count.

mod drivers;

pub use drivers::{
    pilot_mean, Centered, Driver, DriverError, GasObservable, LorentzDriver, LorentzState, SymbolicDriver,
    SymbolicState, MAX_TRACKED_SPAN, PILOT_STREAM,
};

use crate::stats::{gaussian_abs_moment, ks_one_sample, normal_cdf};
use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

/// Substream used by the single long Green-Kubo trajectory.
pub const GREEN_KUBO_STREAM: u64 = u64::MAX;
/// Variances at or below this are treated as degenerate.
pub const VARIANCE_FLOOR: f64 = 1e-12;
/// Consecutive lags below the noise floor that end the Green-Kubo series.
pub const TRUNCATION_RUN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("ensemble member {member}: {source}")]
    Member { member: u64, source: DriverError },
    #[error("autocovariances did not fall below the noise floor {floor} within {n_max} lags (last max |C| = {last})")]
    TruncationNotReached { n_max: usize, floor: f64, last: f64 },
    #[error("variance {sigma2} is degenerate")]
    DegenerateVariance { sigma2: f64 },
    #[error("the set Y was never visited twice in {steps} steps")]
    YNeverVisited { steps: usize },
    #[error("expected a scalar observable, driver has dimension {0}")]
    NotScalar(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn member_err(member: u64) -> impl Fn(DriverError) -> LimitError {
    move |source| LimitError::Member { member, source }
}

/// Runs `n` observations of one member, calling `visit(j, phi o T^j)`.
fn run_member<D: Driver>(
    driver: &D,
    seed: u64,
    member: u64,
    n: usize,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<(), LimitError> {
    let mut state = driver.draw_initial(seed, member).map_err(member_err(member))?;
    let mut obs = vec![0.0; driver.dim()];
    for j in 0..n {
        if j > 0 {
            driver.step(&mut state).map_err(member_err(member))?;
        }
        driver.observe(&state, &mut obs);
        visit(j, &obs);
    }
    Ok(())
}

fn ensemble<T: Send>(
    members: usize,
    per_member: impl Fn(u64) -> Result<T, LimitError> + Sync + Send,
) -> Result<Vec<T>, LimitError> {
    (0..members as u64).into_par_iter().map(per_member).collect()
}

/// Birkhoff sums of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffEnsemble {
    pub n: usize,
    /// `phi_n` per member (`N x k`).
    pub sums: Vec<Vec<f64>>,
    /// Recorded indices `j`, increasing.
    pub record: Vec<usize>,
    /// `phi_j` per member at each recorded `j` (`N x record x k`).
    pub paths: Vec<Vec<Vec<f64>>>,
}

pub fn birkhoff_ensemble<D: Driver>(
    driver: &D,
    n: usize,
    members: usize,
    seed: u64,
    record: &[usize],
) -> Result<BirkhoffEnsemble, LimitError> {
    if n == 0 || members == 0 {
        return Err(LimitError::InvalidArgument("n and N must be at least 1".into()));
    }
    if record.windows(2).any(|w| w[0] >= w[1]) || record.iter().any(|&j| j > n) {
        return Err(LimitError::InvalidArgument("record indices must increase and not exceed n".into()));
    }
    let k = driver.dim();
    let per_member = |i: u64| {
        let mut sum = vec![0.0; k];
        let mut path = Vec::with_capacity(record.len());
        let mut next = 0;
        run_member(driver, seed, i, n, |j, obs| {
            while next < record.len() && record[next] == j {
                path.push(sum.clone());
                next += 1;
            }
            for (s, o) in sum.iter_mut().zip(obs) {
                *s += o;
            }
        })?;
        while next < record.len() {
            path.push(sum.clone());
            next += 1;
        }
        Ok((sum, path))
    };
    let results = ensemble(members, per_member)?;
    let (sums, paths) = results.into_iter().unzip();
    Ok(BirkhoffEnsemble { n, sums, record: record.to_vec(), paths })
}

/// Green-Kubo estimate from one long trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenKuboReport {
    /// `C(0) + sum_{1 <= n < n_T} (C(n) + C(n)^T)`.
    pub sigma: DMatrix<f64>,
    /// `sum_{1 <= n < n_T} C(n)`.
    pub e: DMatrix<f64>,
    /// Autocovariances `C(n)^{bc} = E[phi^b . phi^c o T^n]` for `n = 0..=n_max`.
    pub autocovariance: Vec<DMatrix<f64>>,
    /// First lag of the run of [`TRUNCATION_RUN`] lags below the floor.
    pub truncation_lag: usize,
    /// `max |C(n_T)|`.
    pub tail_diagnostic: f64,
    pub noise_floor: f64,
    pub trajectory_length: usize,
}

pub fn green_kubo<D: Driver>(
    driver: &D,
    n_max: usize,
    traj_len: usize,
    seed: u64,
) -> Result<GreenKuboReport, LimitError> {
    if traj_len < 10 * (n_max + 1) {
        return Err(LimitError::InvalidArgument(format!("trajectory length {traj_len} too short for {n_max} lags")));
    }
    let k = driver.dim();
    let mut series = Vec::with_capacity(traj_len * k);
    run_member(driver, seed, GREEN_KUBO_STREAM, traj_len, |_, obs| series.extend_from_slice(obs))?;
    let means: Vec<f64> =
        (0..k).map(|b| series.iter().skip(b).step_by(k).sum::<f64>() / traj_len as f64).collect();
    for (i, x) in series.iter_mut().enumerate() {
        *x -= means[i % k];
    }

    let autocovariance: Vec<DMatrix<f64>> = (0..=n_max)
        .into_par_iter()
        .map(|lag| {
            let pairs = traj_len - lag;
            DMatrix::from_fn(k, k, |b, c| {
                let mut acc = 0.0;
                for j in 0..pairs {
                    acc += series[j * k + b] * series[(j + lag) * k + c];
                }
                acc / pairs as f64
            })
        })
        .collect();

    let noise_floor = 2.0 / (traj_len as f64).sqrt();
    let size: Vec<f64> = autocovariance.iter().map(|c| c.amax()).collect();
    let truncation_lag = (1..=n_max + 1 - TRUNCATION_RUN)
        .find(|&n| size[n..n + TRUNCATION_RUN].iter().all(|&s| s < noise_floor))
        .ok_or(LimitError::TruncationNotReached { n_max, floor: noise_floor, last: size[n_max] })?;

    let mut e = DMatrix::zeros(k, k);
    for c in &autocovariance[1..truncation_lag] {
        e += c;
    }
    let sigma = &autocovariance[0] + &e + e.transpose();
    Ok(GreenKuboReport {
        sigma,
        e,
        tail_diagnostic: size[truncation_lag],
        autocovariance,
        truncation_lag,
        noise_floor,
        trajectory_length: traj_len,
    })
}

fn require_scalar<D: Driver>(driver: &D) -> Result<(), LimitError> {
    match driver.dim() {
        1 => Ok(()),
        k => Err(LimitError::NotScalar(k)),
    }
}

fn require_variance(sigma2: f64) -> Result<(), LimitError> {
    if sigma2.is_finite() && sigma2 > VARIANCE_FLOOR {
        Ok(())
    } else {
        Err(LimitError::DegenerateVariance { sigma2 })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub ks_statistic: f64,
    /// `n^{-1/2} phi_n` per member.
    pub samples: Vec<f64>,
    pub sigma2: f64,
    pub n: usize,
}

/// KS distance between `n^{-1/2} phi_n` and `N(0, sigma2)`.
pub fn clt_test<D: Driver>(
    driver: &D,
    n: usize,
    members: usize,
    sigma2: f64,
    seed: u64,
) -> Result<CltReport, LimitError> {
    require_scalar(driver)?;
    require_variance(sigma2)?;
    let ens = birkhoff_ensemble(driver, n, members, seed, &[])?;
    let scale = (n as f64).sqrt();
    let samples: Vec<f64> = ens.sums.iter().map(|s| s[0] / scale).collect();
    let ks_statistic = ks_one_sample(&samples, normal_cdf(sigma2)).expect("non-empty ensemble");
    Ok(CltReport { ks_statistic, samples, sigma2, n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WipReport {
    pub times: Vec<f64>,
    /// Empirical `Cov(W_n(s), W_n(t))`.
    pub covariance: DMatrix<f64>,
    /// `sigma2 min(s, t)`.
    pub target: DMatrix<f64>,
    pub max_deviation: f64,
}

/// Covariance of the interpolated path `W_n(t) = n^{-1/2}(phi_{[nt]} + {nt} phi o T^{[nt]})`
/// on a time grid, against Brownian covariance.
pub fn wip_marginals<D: Driver>(
    driver: &D,
    n: usize,
    members: usize,
    times: &[f64],
    sigma2: f64,
    seed: u64,
) -> Result<WipReport, LimitError> {
    require_scalar(driver)?;
    require_variance(sigma2)?;
    if times.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(LimitError::InvalidArgument("times must lie in [0, 1]".into()));
    }
    let mut record: Vec<usize> = times
        .iter()
        .flat_map(|&t| {
            let j = (n as f64 * t).floor() as usize;
            [j, (j + 1).min(n)]
        })
        .collect();
    record.sort_unstable();
    record.dedup();
    let ens = birkhoff_ensemble(driver, n, members, seed, &record)?;
    let at = |path: &Vec<Vec<f64>>, j: usize| path[record.binary_search(&j).unwrap()][0];
    let scale = (n as f64).sqrt();
    let values: Vec<Vec<f64>> = ens
        .paths
        .iter()
        .map(|path| {
            times
                .iter()
                .map(|&t| {
                    let x = n as f64 * t;
                    let j = x.floor() as usize;
                    let frac = x - j as f64;
                    let lo = at(path, j);
                    let hi = at(path, (j + 1).min(n));
                    (lo + frac * (hi - lo)) / scale
                })
                .collect()
        })
        .collect();
    let m = times.len();
    let cov = crate::stats::covariance(&values);
    let covariance = DMatrix::from_fn(m, m, |i, j| cov[i][j]);
    let target = DMatrix::from_fn(m, m, |i, j| sigma2 * times[i].min(times[j]));
    let max_deviation = (&covariance - &target).amax();
    Ok(WipReport { times: times.to_vec(), covariance, target, max_deviation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRow {
    pub p: f64,
    pub n: usize,
    /// `n^{-p/2} mean |phi_n|^p`.
    pub scaled_moment: f64,
    pub std_error: f64,
}

/// `n^{-p/2} E|phi_n|^p` over a grid of `n` and `p` (one pass per member).
pub fn moment_scaling<D: Driver>(
    driver: &D,
    p_list: &[f64],
    n_grid: &[usize],
    members: usize,
    seed: u64,
) -> Result<Vec<MomentRow>, LimitError> {
    require_scalar(driver)?;
    if p_list.iter().any(|&p| !(1.0..=8.0).contains(&p)) {
        return Err(LimitError::InvalidArgument("moments need 1 <= p <= 8".into()));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().ok_or_else(|| LimitError::InvalidArgument("empty n grid".into()))?;
    let ens = birkhoff_ensemble(driver, n_max, members, seed, &grid)?;
    let mut rows = Vec::new();
    for &p in p_list {
        for (g, &n) in grid.iter().enumerate() {
            let scale = (n as f64).powf(-p / 2.0);
            let v: Vec<f64> = ens.paths.iter().map(|path| scale * path[g][0].abs().powf(p)).collect();
            rows.push(MomentRow {
                p,
                n,
                scaled_moment: crate::stats::mean(&v),
                std_error: crate::stats::standard_error(&v),
            });
        }
    }
    Ok(rows)
}

/// Gaussian plateau `E|N(0, sigma2)|^p` that [`moment_scaling`] approaches.
pub fn moment_target(sigma2: f64, p: f64) -> f64 {
    gaussian_abs_moment(sigma2.sqrt(), p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteratedReport {
    /// `W_n(1) = n^{-1/2} phi_n` per member.
    pub w: Vec<Vec<f64>>,
    /// `WW_n(1)^{bc} = n^{-1} S_n^{bc}` per member.
    pub ww: Vec<DMatrix<f64>>,
    /// `S_n^{bc} = sum_{0<=i<j<n} phi^b o T^i phi^c o T^j` per member.
    pub s: Vec<DMatrix<f64>>,
    /// Largest `|WW^{bc} + WW^{cb} + D^{bc} - W^b W^c|` over members and entries,
    /// `D^{bc} = n^{-1} sum_j phi^b phi^c o T^j` the diagonal term.
    pub max_symmetrization_residual: f64,
    pub mean_ww: DMatrix<f64>,
    pub std_error_ww: DMatrix<f64>,
}

pub fn iterated_sums<D: Driver>(driver: &D, n: usize, members: usize, seed: u64) -> Result<IteratedReport, LimitError> {
    if n == 0 || members == 0 {
        return Err(LimitError::InvalidArgument("n and N must be at least 1".into()));
    }
    let k = driver.dim();
    let per_member = |i: u64| {
        let mut partial = vec![0.0; k];
        let mut s = DMatrix::<f64>::zeros(k, k);
        let mut diag = DMatrix::<f64>::zeros(k, k);
        run_member(driver, seed, i, n, |_, obs| {
            for b in 0..k {
                for c in 0..k {
                    s[(b, c)] += partial[b] * obs[c];
                    diag[(b, c)] += obs[b] * obs[c];
                }
            }
            for (p, o) in partial.iter_mut().zip(obs) {
                *p += o;
            }
        })?;
        let nf = n as f64;
        let w: Vec<f64> = partial.iter().map(|p| p / nf.sqrt()).collect();
        let ww = &s / nf;
        let residual = DMatrix::from_fn(k, k, |b, c| ww[(b, c)] + ww[(c, b)] + diag[(b, c)] / nf - w[b] * w[c]).amax();
        Ok((w, ww, s, residual))
    };
    let results = ensemble(members, per_member)?;
    let mut report = IteratedReport {
        w: Vec::with_capacity(members),
        ww: Vec::with_capacity(members),
        s: Vec::with_capacity(members),
        max_symmetrization_residual: 0.0,
        mean_ww: DMatrix::zeros(k, k),
        std_error_ww: DMatrix::zeros(k, k),
    };
    for (w, ww, s, r) in results {
        report.max_symmetrization_residual = report.max_symmetrization_residual.max(r);
        report.w.push(w);
        report.ww.push(ww);
        report.s.push(s);
    }
    for b in 0..k {
        for c in 0..k {
            let v: Vec<f64> = report.ww.iter().map(|m| m[(b, c)]).collect();
            report.mean_ww[(b, c)] = crate::stats::mean(&v);
            report.std_error_ww[(b, c)] =
                if members > 1 { crate::stats::standard_error(&v) } else { f64::NAN };
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnTail {
    /// Empirical `mu_Y(R > n)` for `n = 0..=n_max`.
    pub survival: Vec<f64>,
    /// Fraction of steps spent in `Y`.
    pub visit_fraction: f64,
    pub returns: usize,
    pub max_return: usize,
    /// Distribution of the visit count `h_{n_max}` over disjoint blocks of
    /// `n_max` steps, indexed by count `0..=n_max`.
    pub h_distribution: Vec<f64>,
}

/// First-return statistics of the set `{in_y}` along one long trajectory.
pub fn return_time_tail<D: Driver>(
    driver: &D,
    in_y: impl Fn(&D::State) -> bool,
    n_max: usize,
    traj_len: usize,
    seed: u64,
) -> Result<ReturnTail, LimitError> {
    if n_max == 0 || traj_len <= n_max {
        return Err(LimitError::InvalidArgument("need 0 < n_max < trajectory length".into()));
    }
    let member = GREEN_KUBO_STREAM;
    let mut state = driver.draw_initial(seed, member).map_err(member_err(member))?;
    let mut counts = vec![0usize; n_max + 1];
    let mut h_counts = vec![0usize; n_max + 1];
    let (mut last, mut visits, mut returns, mut max_return, mut block) = (None, 0usize, 0usize, 0usize, 0usize);
    for j in 0..traj_len {
        if j > 0 {
            driver.step(&mut state).map_err(member_err(member))?;
        }
        let hit = in_y(&state);
        if hit {
            visits += 1;
            block += 1;
            if let Some(prev) = last {
                let r: usize = j - prev;
                returns += 1;
                max_return = max_return.max(r);
                // R > n for n < r
                counts[r.min(n_max + 1) - 1] += 1;
            }
            last = Some(j);
        }
        if (j + 1) % n_max == 0 {
            h_counts[block] += 1;
            block = 0;
        }
    }
    if returns == 0 {
        return Err(LimitError::YNeverVisited { steps: traj_len });
    }
    // survival[n] = #{r > n} / returns = sum_{i >= n} counts[i] / returns
    let mut survival = vec![0.0; n_max + 1];
    let mut above = 0usize;
    for n in (0..=n_max).rev() {
        above += counts[n];
        survival[n] = above as f64 / returns as f64;
    }
    let blocks: usize = h_counts.iter().sum();
    Ok(ReturnTail {
        survival,
        visit_fraction: visits as f64 / traj_len as f64,
        returns,
        max_return,
        h_distribution: h_counts.iter().map(|&c| c as f64 / blocks as f64).collect(),
    })
}

/// Green-Kubo variance plus the CLT test against it.
#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub sigma_hat: DMatrix<f64>,
    pub e_hat: DMatrix<f64>,
    pub ks_statistic: f64,
    pub ensemble_size: usize,
    pub trajectory_length: usize,
    pub n: usize,
    pub seed: u64,
    pub tail_diagnostic: f64,
    pub truncation_lag: usize,
}

/// Estimates `sigma^2` by Green-Kubo on one trajectory, then tests the CLT
/// on an independent ensemble against `N(0, sigma^2)` without refitting.
pub fn clt_with_green_kubo<D: Driver>(
    driver: &D,
    n: usize,
    members: usize,
    n_max: usize,
    traj_len: usize,
    seed: u64,
) -> Result<StatReport, LimitError> {
    require_scalar(driver)?;
    let gk = green_kubo(driver, n_max, traj_len, seed)?;
    let clt = clt_test(driver, n, members, gk.sigma[(0, 0)], seed)?;
    Ok(StatReport {
        sigma_hat: gk.sigma,
        e_hat: gk.e,
        ks_statistic: clt.ks_statistic,
        ensemble_size: members,
        trajectory_length: traj_len,
        n,
        seed,
        tail_diagnostic: gk.tail_diagnostic,
        truncation_lag: gk.truncation_lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiard::ScattererTable;
    use crate::symbolic::{BernoulliShift, WindowFunction};

    fn bit(k: i64) -> WindowFunction {
        WindowFunction::coordinate(2, k).add_constant(-0.5)
    }

    fn driver(obs: Vec<WindowFunction>) -> SymbolicDriver {
        SymbolicDriver::new(BernoulliShift::fair(2), obs).unwrap()
    }

    #[test]
    fn zero_observable_gives_zero_sums() {
        let d = driver(vec![WindowFunction::constant(2, 0, 0.0)]);
        let e = birkhoff_ensemble(&d, 50, 20, 1, &[0, 10]).unwrap();
        assert!(e.sums.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(e.paths[0].len(), 2);
    }

    #[test]
    fn single_step_sums_are_centered() {
        let d = driver(vec![bit(0)]);
        let e = birkhoff_ensemble(&d, 1, 10_000, 2, &[]).unwrap();
        let m = crate::stats::mean(&e.sums.iter().map(|s| s[0]).collect::<Vec<_>>());
        assert!(m.abs() <= 3.0 / 100.0);
    }

    #[test]
    fn variance_growth_matches_sigma2() {
        let d = driver(vec![bit(0)]);
        let e = birkhoff_ensemble(&d, 1000, 10_000, 3, &[]).unwrap();
        let v = crate::stats::variance(&e.sums.iter().map(|s| s[0] / 1000f64.sqrt()).collect::<Vec<_>>());
        assert!((v / 0.25 - 1.0).abs() <= 0.05, "{v}");
    }

    #[test]
    fn ensemble_is_deterministic() {
        let d = driver(vec![bit(0), bit(-1)]);
        let a = birkhoff_ensemble(&d, 100, 50, 4, &[7]).unwrap();
        assert_eq!(a, birkhoff_ensemble(&d, 100, 50, 4, &[7]).unwrap());
        assert!(birkhoff_ensemble(&d, 100, 50, 4, &[7, 3]).is_err());
    }

    #[test]
    fn green_kubo_symbolic() {
        let d = driver(vec![bit(0)]);
        let gk = green_kubo(&d, 50, 1_000_000, 5).unwrap();
        assert!((gk.sigma[(0, 0)] - 0.25).abs() <= 3.0 * gk.noise_floor);
        let d = driver(vec![bit(0), bit(-1)]);
        let gk = green_kubo(&d, 50, 1_000_000, 6).unwrap();
        let (_, exact_e) = d.exact_correlations().unwrap();
        assert!((&gk.e - &exact_e).amax() <= 3.0 * gk.noise_floor, "{}", gk.e);
        assert!((&gk.sigma - gk.sigma.transpose()).amax() <= 1e-8);
    }

    #[test]
    fn green_kubo_requires_decay() {
        // constant sequence never decorrelates from its sample mean... use a
        // period-2 observable whose autocovariance never decays
        struct Flip;
        impl Driver for Flip {
            type State = f64;
            fn dim(&self) -> usize {
                1
            }
            fn draw_initial(&self, _: u64, _: u64) -> Result<f64, DriverError> {
                Ok(1.0)
            }
            fn step(&self, s: &mut f64) -> Result<(), DriverError> {
                *s = -*s;
                Ok(())
            }
            fn observe(&self, s: &f64, out: &mut [f64]) {
                out[0] = *s;
            }
        }
        assert!(matches!(green_kubo(&Flip, 20, 10_000, 0), Err(LimitError::TruncationNotReached { .. })));
    }

    #[test]
    fn clt_examples() {
        let d = driver(vec![bit(0)]);
        let r = clt_test(&d, 10_000, 2000, 0.25, 7).unwrap();
        assert!(r.ks_statistic <= 0.05);
        assert!(matches!(clt_test(&d, 10, 10, 0.0, 7), Err(LimitError::DegenerateVariance { .. })));
        let two = driver(vec![bit(0), bit(1)]);
        assert!(matches!(clt_test(&two, 10, 10, 1.0, 7), Err(LimitError::NotScalar(2))));
    }

    #[test]
    fn wip_covariance_is_brownian() {
        let d = driver(vec![bit(0)]);
        let r = wip_marginals(&d, 2000, 4000, &[0.0, 0.25, 0.5, 0.75, 1.0], 0.25, 8).unwrap();
        assert_eq!(r.covariance[(0, 0)], 0.0);
        assert!(r.max_deviation <= 0.1 * 0.25, "{}", r.max_deviation);
        assert!(wip_marginals(&d, 10, 10, &[1.5], 0.25, 8).is_err());
    }

    #[test]
    fn moment_plateaus() {
        let d = driver(vec![bit(0)]);
        let rows = moment_scaling(&d, &[1.0, 2.0], &[100, 1000], 10_000, 9).unwrap();
        for r in rows.iter().filter(|r| r.n == 1000) {
            let target = moment_target(0.25, r.p);
            assert!((r.scaled_moment / target - 1.0).abs() <= 0.05, "{r:?}");
        }
        assert!(moment_scaling(&d, &[9.0], &[10], 10, 9).is_err());
    }

    #[test]
    fn iterated_sums_identity_and_mean() {
        let d = driver(vec![bit(0), bit(-1)]);
        let r = iterated_sums(&d, 500, 4000, 10).unwrap();
        assert!(r.max_symmetrization_residual <= 1e-10);
        let expected = 0.25 * (1.0 - 1.0 / 500.0);
        assert!((r.mean_ww[(0, 1)] - expected).abs() <= 4.0 * r.std_error_ww[(0, 1)]);
        assert!(r.mean_ww[(1, 0)].abs() <= 4.0 * r.std_error_ww[(1, 0)]);
        let scalar = driver(vec![WindowFunction::from_fn(-1, 1, 2, |w| w[0] as f64 * 0.7 - w[2] as f64 * 1.3 + 0.3).unwrap()]);
        let r = iterated_sums(&scalar, 200, 50, 11).unwrap();
        assert!(r.max_symmetrization_residual <= 1e-10);
    }

    #[test]
    fn return_time_examples() {
        let d = driver(vec![bit(0)]);
        let all = return_time_tail(&d, |_| true, 5, 1000, 1).unwrap();
        assert_eq!(all.survival, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let zero = return_time_tail(&d, |s| d.coordinate(s, 0) == 0, 8, 400_000, 2).unwrap();
        for (n, &s) in zero.survival.iter().enumerate() {
            let exact = 0.5f64.powi(n as i32);
            assert!((s - exact).abs() <= 5.0 * (exact * (1.0 - exact) / zero.returns as f64).sqrt() + 1e-12, "n={n}");
        }
        assert!(matches!(return_time_tail(&d, |_| false, 5, 100, 1), Err(LimitError::YNeverVisited { .. })));
    }

    #[test]
    fn gas_return_times_are_bounded_by_the_horizon() {
        let d = LorentzDriver::velocity(ScattererTable::reference());
        let r = return_time_tail(&d, LorentzDriver::collided, 10, 20_000, 3).unwrap();
        // tau_max ~ 1.5 on the reference table
        assert!(r.max_return <= 2);
        assert!(r.survival[2..].iter().all(|&s| s == 0.0));
    }
}
