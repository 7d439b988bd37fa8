//! Martingale-coboundary decomposition `phi = m + chi o T - chi` on the
//! Bernoulli shift, computed exactly for window functions.
//!
//! With `g_n = E[phi o T^n | F_0]` and `L = max(|lo|, hi)`,
//!
//! ```text
//! chi = sum_{n=0}^{L} (g_n - phi o T^n) + sum_{n=1}^{L} g_{-n}
//! ```
//!
//! Both series stop at `L`: for `n > L` the window of `phi o T^n` is inside
//! `[0, inf)`, so `g_n = phi o T^n`, and the window of `phi o T^{-n}` is inside
//! `(-inf, 0)`, so `g_{-n} = E[phi] = 0`.
//!
//! `m` is assembled from the telescoping form
//! `m = sum_{n=-hi-1}^{-lo-1} (g_{n+1} - g_n o T)`, which is `F_0`-measurable
//! term by term and satisfies `m = phi + chi - chi o T`; the reported
//! `residual_decomposition` checks that identity independently.

use crate::symbolic::{BernoulliShift, SymbolicError, WindowFunction, MAX_TABLE_ENTRIES};
use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance for the mean-zero precondition.
pub const MEAN_TOL: f64 = 1e-12;
/// Window edges on which `chi` and `m` vary by less than this are dropped.
const TRIM_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MartError {
    #[error("observable has mean {mean}, expected 0")]
    NotMeanZero { mean: f64 },
    #[error("window too large: {0}")]
    WindowTooLarge(SymbolicError),
    #[error("function with window [{lo}, {hi}] is not F_0-measurable")]
    NotF0Measurable { lo: i64, hi: i64 },
    #[error("psi with window [{lo}, {hi}] is not F_0-measurable")]
    PsiNotF0Measurable { lo: i64, hi: i64 },
    #[error("need at least one observable")]
    EmptyObservable,
    #[error(transparent)]
    Symbolic(SymbolicError),
}

impl From<SymbolicError> for MartError {
    fn from(e: SymbolicError) -> Self {
        match e {
            SymbolicError::WindowTooLarge { .. } => MartError::WindowTooLarge(e),
            other => MartError::Symbolic(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub phi: WindowFunction,
    pub m: WindowFunction,
    pub chi: WindowFunction,
    /// `max |phi - m - chi o T + chi|`.
    pub residual_decomposition: f64,
    /// `max |E[m | T^{-1} F_0]|`.
    pub residual_martingale: f64,
    pub sigma2_from_m: f64,
    pub sigma2_green_kubo: f64,
}

impl DecompositionResult {
    /// `sigma^2 = 0` up to rounding: `phi` is a coboundary.
    pub fn is_degenerate(&self) -> bool {
        self.sigma2_from_m.abs() <= 1e-12
    }
}

fn horizon(phi: &WindowFunction) -> i64 {
    phi.lo().abs().max(phi.hi())
}

fn require_mean_zero(shift: &BernoulliShift, phi: &WindowFunction) -> Result<(), MartError> {
    let mean = shift.expectation(phi);
    if mean.abs() > MEAN_TOL {
        return Err(MartError::NotMeanZero { mean });
    }
    Ok(())
}

/// `g_n = E[phi o T^n | F_0]`.
fn g(shift: &BernoulliShift, phi: &WindowFunction, n: i64) -> WindowFunction {
    shift.condition_future(&phi.shift(n))
}

fn sum_all(terms: impl IntoIterator<Item = WindowFunction>, alphabet: usize) -> Result<WindowFunction, MartError> {
    let mut acc = WindowFunction::constant(alphabet, 0, 0.0);
    for t in terms {
        acc = acc.add(&t)?;
    }
    Ok(acc)
}

pub fn decompose(shift: &BernoulliShift, phi: &WindowFunction) -> Result<DecompositionResult, MartError> {
    require_mean_zero(shift, phi)?;
    let l = horizon(phi);
    let a = phi.alphabet() as u128;
    // chi o T lives on [min(lo, 0), hi + L + 1]
    let span = (phi.hi() + l + 1 - phi.lo().min(0) + 1) as u32;
    let entries = a.checked_pow(span).unwrap_or(u128::MAX);
    if entries > MAX_TABLE_ENTRIES as u128 {
        return Err(MartError::WindowTooLarge(SymbolicError::WindowTooLarge { entries }));
    }

    let forward = (0..=l).map(|n| g(shift, phi, n).sub(&phi.shift(n)));
    let backward = (1..=l).map(|n| Ok(g(shift, phi, -n)));
    let chi = sum_all(forward.chain(backward).collect::<Result<Vec<_>, SymbolicError>>()?, phi.alphabet())?;

    let telescoping = (-phi.hi() - 1..=-phi.lo() - 1).map(|n| g(shift, phi, n + 1).sub(&g(shift, phi, n).shift(1)));
    let m = sum_all(telescoping.collect::<Result<Vec<_>, SymbolicError>>()?, phi.alphabet())?;

    let chi = chi.trim(TRIM_TOL);
    let m = m.trim(TRIM_TOL);
    // trimming never moves m's window below 0
    debug_assert!(m.is_future_measurable());

    let residual_decomposition = phi.sub(&m)?.sub(&chi.shift(1))?.add(&chi)?.max_abs();
    let residual_martingale = verify_martingale(shift, &m)?;
    let sigma2_from_m = shift.expectation(&m.mul(&m)?);
    let sigma2_green_kubo = green_kubo_sigma2(shift, phi)?;

    Ok(DecompositionResult {
        phi: phi.clone(),
        m,
        chi,
        residual_decomposition,
        residual_martingale,
        sigma2_from_m,
        sigma2_green_kubo,
    })
}

/// `sum_{|n| <= 2L} E[phi . phi o T^n]`; all other terms vanish.
fn green_kubo_sigma2(shift: &BernoulliShift, phi: &WindowFunction) -> Result<f64, MartError> {
    let l = 2 * horizon(phi);
    let mut total = 0.0;
    for n in -l..=l {
        total += shift.correlation(phi, phi, n)?;
    }
    Ok(total)
}

/// `max |E[m | T^{-1} F_0]|`.
pub fn verify_martingale(shift: &BernoulliShift, m: &WindowFunction) -> Result<f64, MartError> {
    if !m.is_future_measurable() {
        return Err(MartError::NotF0Measurable { lo: m.lo(), hi: m.hi() });
    }
    Ok(shift.condition_shifted_future(m, 1).max_abs())
}

/// `(E[m^2], Green-Kubo sum)` for a decomposition.
pub fn sigma2_exact(result: &DecompositionResult) -> (f64, f64) {
    (result.sigma2_from_m, result.sigma2_green_kubo)
}

/// `E[phi]` when it is not within [`MEAN_TOL`] of zero, else exactly 0.
fn structural_mean(shift: &BernoulliShift, phi: &WindowFunction) -> f64 {
    let mean = shift.expectation(phi);
    if mean.abs() <= MEAN_TOL {
        0.0
    } else {
        mean
    }
}

/// Norm sequences of the two projective conditions:
/// `|E[phi o T^{-n} | F_0]|_p` for `n = 1..=n_max` and
/// `|E[phi o T^n | F_0] - phi o T^n|_p` for `n = 0..n_max`.
///
/// Once `phi o T^{-n}` lives entirely on negative coordinates its conditional
/// expectation is the constant `E[phi]`, reported as exactly 0 for mean-zero
/// `phi`.
pub fn condition_decay_profile(
    shift: &BernoulliShift,
    phi: &WindowFunction,
    p: f64,
    n_max: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mean = structural_mean(shift, phi);
    let past = (1..=n_max as i64)
        .map(|n| if phi.hi() - n < 0 { mean.abs() } else { shift.lp_norm(&g(shift, phi, -n), p) })
        .collect();
    let future = (0..n_max as i64)
        .map(|n| {
            let shifted = phi.shift(n);
            let diff = shift.condition_future(&shifted).sub(&shifted).expect("same alphabet");
            shift.lp_norm(&diff, p)
        })
        .collect();
    (past, future)
}

/// `|E[phi . psi o T^n]|` for `n = 0..=n_max`.
///
/// When the windows of `phi` and `psi o T^n` are disjoint the value is
/// `|E[phi] E[psi]| = 0`.
pub fn check_condition_a(
    shift: &BernoulliShift,
    phi: &WindowFunction,
    psi: &WindowFunction,
    n_max: usize,
) -> Result<Vec<f64>, MartError> {
    if !psi.is_future_measurable() {
        return Err(MartError::PsiNotF0Measurable { lo: psi.lo(), hi: psi.hi() });
    }
    require_mean_zero(shift, phi)?;
    (0..=n_max as i64)
        .map(|n| {
            if psi.lo() + n > phi.hi() {
                Ok(0.0)
            } else {
                Ok(shift.correlation(phi, psi, n)?.abs())
            }
        })
        .collect()
}

/// Oscillation of `phi` over the coordinates `< -n` with the coordinates
/// `>= -n` fixed, for `n = 0..=n_max`. Zero once `n >= |lo|`.
pub fn check_condition_b(phi: &WindowFunction, n_max: usize) -> Vec<f64> {
    (0..=n_max as i64).map(|n| phi.max_variation_below(-n)).collect()
}

/// Exact `(Sigma, E)` for a vector observable:
/// `E^{bc} = sum_{n>=1} E[phi^b . phi^c o T^n]` and
/// `Sigma = C(0) + E + E^T`.
pub fn correlation_matrices(
    shift: &BernoulliShift,
    phis: &[WindowFunction],
) -> Result<(DMatrix<f64>, DMatrix<f64>), MartError> {
    if phis.is_empty() {
        return Err(MartError::EmptyObservable);
    }
    for phi in phis {
        require_mean_zero(shift, phi)?;
    }
    let d = phis.len();
    let mut c0 = DMatrix::zeros(d, d);
    let mut e = DMatrix::zeros(d, d);
    for (b, f) in phis.iter().enumerate() {
        for (c, h) in phis.iter().enumerate() {
            c0[(b, c)] = shift.correlation(f, h, 0)?;
            // terms with h's window beyond f's vanish
            for n in 1..=(f.hi() - h.lo()).max(0) {
                e[(b, c)] += shift.correlation(f, h, n)?;
            }
        }
    }
    let sigma = &c0 + &e + e.transpose();
    Ok((sigma, e))
}
