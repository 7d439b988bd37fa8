//! Sources of stationary observable sequences `phi o T^j`.

use crate::billiard::{sample_phase_point, time_one_counted, BilliardError, FlowPoint, ScattererTable};
use crate::martdecomp::{correlation_matrices, MartError};
use crate::rng::{member_rng, StreamRng};
use crate::symbolic::{BernoulliShift, WindowFunction};
use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

/// Largest coordinate span a symbolic driver tracks.
pub const MAX_TRACKED_SPAN: i64 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriverError {
    #[error(transparent)]
    Billiard(#[from] BilliardError),
    #[error("invalid driver: {0}")]
    Invalid(String),
}

/// A measure-preserving system with a bounded vector observable.
pub trait Driver: Sync {
    type State: Send;

    /// Dimension `k` of the observable.
    fn dim(&self) -> usize;

    /// Sample from the invariant measure on substream `(seed, index)`.
    fn draw_initial(&self, seed: u64, index: u64) -> Result<Self::State, DriverError>;

    /// One application of `T`.
    fn step(&self, state: &mut Self::State) -> Result<(), DriverError>;

    fn observe(&self, state: &Self::State, out: &mut [f64]);
}

#[derive(Debug, Clone)]
enum SymbolSampler {
    /// Uniform power-of-two alphabet: `bits` random bits per symbol.
    Bits(u32),
    /// Inverse-CDF sampling.
    Cumulative(Vec<f64>),
}

/// Bernoulli shift with window-function observables.
///
/// The state holds the coordinates `x_kmin..=x_kmax` (a range containing 0
/// and every observable window); a step drops `x_kmin` and draws a fresh
/// independent `x_{kmax+1}`, which realizes `(Tx)_k = x_{k+1}` exactly in law.
#[derive(Debug, Clone)]
pub struct SymbolicDriver {
    shift: BernoulliShift,
    observables: Vec<WindowFunction>,
    kmin: i64,
    span: usize,
    sampler: SymbolSampler,
}

#[derive(Debug, Clone)]
pub struct SymbolicState {
    coords: Vec<u8>,
    head: usize,
    rng: StreamRng,
    bits: u64,
    bits_left: u32,
}

impl SymbolicDriver {
    pub fn new(shift: BernoulliShift, observables: Vec<WindowFunction>) -> Result<Self, DriverError> {
        if observables.is_empty() {
            return Err(DriverError::Invalid("no observables".into()));
        }
        let a = shift.alphabet_size();
        if a > 256 {
            return Err(DriverError::Invalid("alphabet larger than 256".into()));
        }
        if let Some(f) = observables.iter().find(|f| f.alphabet() != a) {
            return Err(DriverError::Invalid(format!("observable alphabet {} vs shift {a}", f.alphabet())));
        }
        let kmin = observables.iter().map(|f| f.lo()).min().unwrap().min(0);
        let kmax = observables.iter().map(|f| f.hi()).max().unwrap().max(0);
        if kmax - kmin >= MAX_TRACKED_SPAN {
            return Err(DriverError::Invalid(format!("windows span [{kmin}, {kmax}]")));
        }
        let p = shift.probabilities();
        let sampler = if a.is_power_of_two() && p.iter().all(|&q| q == p[0]) {
            SymbolSampler::Bits(a.trailing_zeros())
        } else {
            let mut acc = 0.0;
            SymbolSampler::Cumulative(
                p.iter()
                    .map(|q| {
                        acc += q;
                        acc
                    })
                    .collect(),
            )
        };
        Ok(Self { shift, observables, kmin, span: (kmax - kmin + 1) as usize, sampler })
    }

    pub fn shift(&self) -> &BernoulliShift {
        &self.shift
    }

    pub fn observables(&self) -> &[WindowFunction] {
        &self.observables
    }

    /// Exact `E[phi^b]`.
    pub fn exact_means(&self) -> Vec<f64> {
        self.observables.iter().map(|f| self.shift.expectation(f)).collect()
    }

    /// Exact `(Sigma, E)` of the observable.
    pub fn exact_correlations(&self) -> Result<(DMatrix<f64>, DMatrix<f64>), MartError> {
        correlation_matrices(&self.shift, &self.observables)
    }

    #[inline]
    fn draw_symbol(&self, st: &mut SymbolicState) -> u8 {
        match &self.sampler {
            SymbolSampler::Bits(b) => {
                if st.bits_left < *b {
                    st.bits = st.rng.random::<u64>();
                    st.bits_left = 64;
                }
                let s = (st.bits & ((1u64 << b) - 1)) as u8;
                st.bits >>= b;
                st.bits_left -= b;
                s
            }
            SymbolSampler::Cumulative(cdf) => {
                let u: f64 = st.rng.random();
                cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u8
            }
        }
    }

    /// Coordinate `x_k` of the current state.
    pub fn coordinate(&self, st: &SymbolicState, k: i64) -> usize {
        st.coords[(st.head + (k - self.kmin) as usize) % self.span] as usize
    }
}

impl Driver for SymbolicDriver {
    type State = SymbolicState;

    fn dim(&self) -> usize {
        self.observables.len()
    }

    fn draw_initial(&self, seed: u64, index: u64) -> Result<SymbolicState, DriverError> {
        let mut st =
            SymbolicState { coords: vec![0; self.span], head: 0, rng: member_rng(seed, index), bits: 0, bits_left: 0 };
        for i in 0..self.span {
            st.coords[i] = self.draw_symbol(&mut st);
        }
        Ok(st)
    }

    #[inline]
    fn step(&self, st: &mut SymbolicState) -> Result<(), DriverError> {
        let fresh = self.draw_symbol(st);
        st.coords[st.head] = fresh;
        st.head = (st.head + 1) % self.span;
        Ok(())
    }

    #[inline]
    fn observe(&self, st: &SymbolicState, out: &mut [f64]) {
        let a = self.shift.alphabet_size();
        for (o, f) in out.iter_mut().zip(&self.observables) {
            let mut index = 0;
            for k in (f.lo()..=f.hi()).rev() {
                index = index * a + self.coordinate(st, k);
            }
            *o = f.table()[index];
        }
    }
}

/// Observables of the Lorentz gas flow point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GasObservable {
    CosTheta,
    SinTheta,
}

impl GasObservable {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "cos_theta" => Some(Self::CosTheta),
            "sin_theta" => Some(Self::SinTheta),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CosTheta => "cos_theta",
            Self::SinTheta => "sin_theta",
        }
    }

    /// Mean under the invariant volume (the direction is uniform and
    /// independent of position).
    pub fn exact_mean(self) -> f64 {
        0.0
    }
}

/// Time-one map of the Lorentz gas with velocity observables.
#[derive(Debug, Clone)]
pub struct LorentzDriver {
    table: ScattererTable,
    observables: Vec<GasObservable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzState {
    pub point: FlowPoint,
    /// Collisions crossed by the most recent step.
    pub collisions: usize,
}

impl LorentzDriver {
    pub fn new(table: ScattererTable, observables: Vec<GasObservable>) -> Result<Self, DriverError> {
        if observables.is_empty() {
            return Err(DriverError::Invalid("no observables".into()));
        }
        Ok(Self { table, observables })
    }

    /// The velocity `(cos theta, sin theta)`.
    pub fn velocity(table: ScattererTable) -> Self {
        Self { table, observables: vec![GasObservable::CosTheta, GasObservable::SinTheta] }
    }

    pub fn table(&self) -> &ScattererTable {
        &self.table
    }

    pub fn observables(&self) -> &[GasObservable] {
        &self.observables
    }

    pub fn exact_means(&self) -> Vec<f64> {
        self.observables.iter().map(|o| o.exact_mean()).collect()
    }

    /// Indicator of `Y`: the unit time step just taken met a scatterer.
    pub fn collided(state: &LorentzState) -> bool {
        state.collisions > 0
    }
}

impl Driver for LorentzDriver {
    type State = LorentzState;

    fn dim(&self) -> usize {
        self.observables.len()
    }

    fn draw_initial(&self, seed: u64, index: u64) -> Result<LorentzState, DriverError> {
        let mut rng = member_rng(seed, index);
        let point = sample_phase_point(&self.table, &mut rng);
        // one step so that `collisions` is defined
        let (point, collisions) = time_one_counted(&self.table, &point)?;
        Ok(LorentzState { point, collisions })
    }

    fn step(&self, state: &mut LorentzState) -> Result<(), DriverError> {
        let (point, collisions) = time_one_counted(&self.table, &state.point)?;
        *state = LorentzState { point, collisions };
        Ok(())
    }

    fn observe(&self, state: &LorentzState, out: &mut [f64]) {
        let (s, c) = state.point.theta.sin_cos();
        for (o, obs) in out.iter_mut().zip(&self.observables) {
            *o = match obs {
                GasObservable::CosTheta => c,
                GasObservable::SinTheta => s,
            };
        }
    }
}

/// Subtracts fixed means from another driver's observable.
#[derive(Debug, Clone)]
pub struct Centered<D> {
    inner: D,
    means: Vec<f64>,
}

impl<D: Driver> Centered<D> {
    pub fn new(inner: D, means: Vec<f64>) -> Result<Self, DriverError> {
        if means.len() != inner.dim() {
            return Err(DriverError::Invalid(format!("{} means for dimension {}", means.len(), inner.dim())));
        }
        Ok(Self { inner, means })
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

impl<D: Driver> Driver for Centered<D> {
    type State = D::State;

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn draw_initial(&self, seed: u64, index: u64) -> Result<D::State, DriverError> {
        self.inner.draw_initial(seed, index)
    }

    fn step(&self, state: &mut D::State) -> Result<(), DriverError> {
        self.inner.step(state)
    }

    fn observe(&self, state: &D::State, out: &mut [f64]) {
        self.inner.observe(state, out);
        for (o, m) in out.iter_mut().zip(&self.means) {
            *o -= m;
        }
    }
}

/// Substream reserved for pilot runs.
pub const PILOT_STREAM: u64 = u64::MAX - 1;

/// Ergodic average of the observable over `steps` steps of one trajectory.
pub fn pilot_mean<D: Driver>(driver: &D, steps: usize, seed: u64) -> Result<Vec<f64>, DriverError> {
    let k = driver.dim();
    let mut state = driver.draw_initial(seed, PILOT_STREAM)?;
    let mut obs = vec![0.0; k];
    let mut total = vec![0.0; k];
    for j in 0..steps {
        if j > 0 {
            driver.step(&mut state)?;
        }
        driver.observe(&state, &mut obs);
        for (t, o) in total.iter_mut().zip(&obs) {
            *t += o;
        }
    }
    Ok(total.into_iter().map(|t| t / steps as f64).collect())
}
