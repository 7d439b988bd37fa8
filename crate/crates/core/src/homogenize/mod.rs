//! Fast-slow systems driven by a chaotic sequence and their homogenized SDE.
//!
//! The slow variable evolves by
//! `x(j+1) = x(j) + eps^2 a(x(j)) + eps b(x(j)) phi(y(j))` with `y(j+1) = T y(j)`,
//! and `x_hat(1) = x(ceil(eps^-2))`. Its limit solves
//! `dZ = a_tilde(Z) dt + b(Z) dW` with `W` a Brownian motion of covariance
//! `Sigma`, where
//! `a_tilde^{a'} = a^{a'} + sum_{a, b, c} E^{cb} d_a b^{a'b} b^{ac}`.

mod poly;

pub use poly::{Poly, PolyError, MAX_DEGREE};

use crate::limitlaws::{Driver, DriverError};
use crate::rng::member_rng;
use crate::stats::{compare_samples, StatsError};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

/// `|x|` beyond which a slow trajectory is declared divergent.
pub const BLOWUP_BOUND: f64 = 1e6;
pub const MIN_SDE_STEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomogenizeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("member {member}: slow variable exceeded {BLOWUP_BOUND} at step {step}")]
    SlowVariableBlowup { member: u64, step: usize },
    #[error("covariance is not symmetric positive semidefinite (asymmetry {asymmetry}, min eigenvalue {min_eigenvalue})")]
    SigmaNotPSD { asymmetry: f64, min_eigenvalue: f64 },
    #[error("empty sample")]
    EmptySample,
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("member {member}: {source}")]
    Driver { member: u64, source: DriverError },
}

impl From<StatsError> for HomogenizeError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::EmptySample => HomogenizeError::EmptySample,
            StatsError::DimensionMismatch(a, b) => HomogenizeError::DimensionMismatch(format!("{a} vs {b}")),
        }
    }
}

/// `d x k` matrix of polynomials in `d` variables; column `b` is the vector
/// field `b^b`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    /// Row-major entries.
    pub fn new(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<Self, HomogenizeError> {
        if entries.len() != rows * cols {
            return Err(HomogenizeError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        if let Some(p) = entries.iter().find(|p| p.dim() != rows) {
            return Err(HomogenizeError::DimensionMismatch(format!("entry in {} variables, expected {rows}", p.dim())));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let entries = (0..rows * cols).map(|i| Poly::constant(rows, m[(i / cols, i % cols)])).collect();
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, i: usize, j: usize) -> &Poly {
        &self.entries[i * self.cols + j]
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.entry(i, j).eval(x))
    }

    /// Entrywise `d/dx_a`.
    pub fn derivative(&self, a: usize) -> Self {
        Self { entries: self.entries.iter().map(|p| p.derivative(a)).collect(), ..self.clone() }
    }
}

fn eval_field(field: &[Poly], x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(field.len(), field.iter().map(|p| p.eval(x)))
}

fn check_field(a: &[Poly], b: &PolyMatrix) -> Result<(), HomogenizeError> {
    let d = b.rows();
    if a.len() != d || a.iter().any(|p| p.dim() != d) {
        return Err(HomogenizeError::DimensionMismatch(format!("drift has {} components, diffusion has {d} rows", a.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastSlowSpec {
    pub a: Vec<Poly>,
    pub b: PolyMatrix,
    pub epsilon: f64,
    pub xi: Vec<f64>,
    pub ensemble: usize,
    pub seed: u64,
}

impl FastSlowSpec {
    pub fn d(&self) -> usize {
        self.b.rows()
    }

    pub fn k(&self) -> usize {
        self.b.cols()
    }

    pub fn validate(&self) -> Result<(), HomogenizeError> {
        check_field(&self.a, &self.b)?;
        if self.xi.len() != self.d() {
            return Err(HomogenizeError::DimensionMismatch(format!("initial point has {} coordinates", self.xi.len())));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.1) {
            return Err(HomogenizeError::InvalidSpec(format!("epsilon {} not in (0, 0.1]", self.epsilon)));
        }
        if self.ensemble == 0 {
            return Err(HomogenizeError::InvalidSpec("empty ensemble".into()));
        }
        Ok(())
    }

    /// `ceil(eps^-2)`, ignoring rounding noise in `1 / eps^2`.
    pub fn slow_steps(&self) -> usize {
        let n = 1.0 / (self.epsilon * self.epsilon);
        let r = n.round();
        if (n - r).abs() <= 1e-9 * r {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// Samples of `x_hat_eps(1)`; member `i` draws `y(0)` on substream `(seed, i)`.
pub fn simulate_fastslow<D: Driver>(spec: &FastSlowSpec, driver: &D) -> Result<Vec<Vec<f64>>, HomogenizeError> {
    spec.validate()?;
    if driver.dim() != spec.k() {
        return Err(HomogenizeError::DimensionMismatch(format!(
            "driver observable has dimension {}, diffusion has {} columns",
            driver.dim(),
            spec.k()
        )));
    }
    let steps = spec.slow_steps();
    let (eps, eps2) = (spec.epsilon, spec.epsilon * spec.epsilon);
    (0..spec.ensemble as u64)
        .into_par_iter()
        .map(|member| {
            let wrap = |source| HomogenizeError::Driver { member, source };
            let mut y = driver.draw_initial(spec.seed, member).map_err(wrap)?;
            let mut phi = vec![0.0; spec.k()];
            let mut x = DVector::from_column_slice(&spec.xi);
            for step in 0..steps {
                if step > 0 {
                    driver.step(&mut y).map_err(wrap)?;
                }
                driver.observe(&y, &mut phi);
                let xs = x.as_slice().to_vec();
                let drift = eval_field(&spec.a, &xs);
                let noise = spec.b.eval(&xs) * DVector::from_column_slice(&phi);
                x += drift * eps2 + noise * eps;
                if !(x.amax() <= BLOWUP_BOUND) {
                    return Err(HomogenizeError::SlowVariableBlowup { member, step });
                }
            }
            Ok(x.as_slice().to_vec())
        })
        .collect()
}

/// `a_tilde = a + correction`, evaluable pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedDrift {
    a: Vec<Poly>,
    b: PolyMatrix,
    db: Vec<PolyMatrix>,
    e: DMatrix<f64>,
}

impl CorrectedDrift {
    /// The drift `a` with no correction.
    pub fn plain(a: Vec<Poly>, b: PolyMatrix) -> Result<Self, HomogenizeError> {
        let k = b.cols();
        drift_correction(a, b, &DMatrix::zeros(k, k))
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn b(&self) -> &PolyMatrix {
        &self.b
    }

    /// `sum_{a, b, c} E^{cb} d_a b^{a'b}(x) b^{ac}(x)` for each `a'`.
    pub fn correction(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let bx = self.b.eval(x);
        let mut out = DVector::zeros(d);
        for (alpha, db) in self.db.iter().enumerate() {
            let dbx = db.eval(x);
            // (dbx * E^T)[a', c] = sum_b d_a b^{a'b} E^{cb}
            let weighted = dbx * self.e.transpose();
            for ap in 0..d {
                out[ap] += (0..self.b.cols()).map(|c| weighted[(ap, c)] * bx[(alpha, c)]).sum::<f64>();
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        eval_field(&self.a, x) + self.correction(x)
    }
}

/// Builds the corrected drift from `a`, `b` and the one-sided correlation
/// matrix `E`.
pub fn drift_correction(a: Vec<Poly>, b: PolyMatrix, e: &DMatrix<f64>) -> Result<CorrectedDrift, HomogenizeError> {
    check_field(&a, &b)?;
    if e.shape() != (b.cols(), b.cols()) {
        return Err(HomogenizeError::DimensionMismatch(format!(
            "E is {}x{}, diffusion has {} columns",
            e.nrows(),
            e.ncols(),
            b.cols()
        )));
    }
    let db = (0..b.rows()).map(|alpha| b.derivative(alpha)).collect();
    Ok(CorrectedDrift { a, b, db, e: e.clone() })
}

/// The correction term with derivatives of `b` replaced by central
/// differences of step `h`.
pub fn correction_finite_difference(b: &PolyMatrix, e: &DMatrix<f64>, x: &[f64], h: f64) -> DVector<f64> {
    let (d, k) = (b.rows(), b.cols());
    let bx = b.eval(x);
    let mut out = DVector::zeros(d);
    for alpha in 0..d {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[alpha] += h;
        minus[alpha] -= h;
        let db = (b.eval(&plus) - b.eval(&minus)) / (2.0 * h);
        for ap in 0..d {
            for beta in 0..k {
                for gamma in 0..k {
                    out[ap] += e[(gamma, beta)] * db[(ap, beta)] * bx[(alpha, gamma)];
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeSpec {
    pub drift: CorrectedDrift,
    pub sigma: DMatrix<f64>,
    pub xi: Vec<f64>,
    pub steps: usize,
    pub ensemble: usize,
    pub seed: u64,
}

/// Symmetric PSD square root `V diag(sqrt(max(l, 0))) V^T`.
pub fn sqrt_psd(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>, HomogenizeError> {
    let asymmetry = (sigma - sigma.transpose()).amax();
    let eig = sigma.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.min();
    if asymmetry > SYMMETRY_TOL || min_eigenvalue < -SYMMETRY_TOL {
        return Err(HomogenizeError::SigmaNotPSD { asymmetry, min_eigenvalue });
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

/// Euler-Maruyama samples of `Z(1)`; member `i` uses substream `(seed, i)`.
pub fn euler_maruyama(sde: &SdeSpec) -> Result<Vec<Vec<f64>>, HomogenizeError> {
    let (d, k) = (sde.drift.dim(), sde.drift.b().cols());
    if sde.sigma.shape() != (k, k) {
        return Err(HomogenizeError::DimensionMismatch(format!("Sigma must be {k}x{k}")));
    }
    if sde.xi.len() != d {
        return Err(HomogenizeError::DimensionMismatch(format!("initial point has {} coordinates", sde.xi.len())));
    }
    if sde.steps < MIN_SDE_STEPS {
        return Err(HomogenizeError::InvalidSpec(format!("need at least {MIN_SDE_STEPS} steps")));
    }
    let root = sqrt_psd(&sde.sigma)?;
    let dt = 1.0 / sde.steps as f64;
    let sqrt_dt = dt.sqrt();
    let samples = (0..sde.ensemble as u64)
        .into_par_iter()
        .map(|member| {
            let mut rng = member_rng(sde.seed, member);
            let mut z = DVector::from_column_slice(&sde.xi);
            for _ in 0..sde.steps {
                let xi = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let zs = z.as_slice().to_vec();
                let dw = &root * xi * sqrt_dt;
                z += sde.drift.eval(&zs) * dt + sde.drift.b().eval(&zs) * dw;
            }
            z.as_slice().to_vec()
        })
        .collect();
    Ok(samples)
}

/// Per-coordinate two-sample KS distances and the energy distance.
pub fn compare_distributions(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(Vec<f64>, f64), HomogenizeError> {
    Ok(compare_samples(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limitlaws::SymbolicDriver;
    use crate::stats::{covariance, mean, variance};
    use crate::symbolic::{BernoulliShift, WindowFunction};
    use proptest::prelude::*;

    fn p1(s: &str) -> Poly {
        Poly::parse(1, s).unwrap()
    }

    fn scalar_b(s: &str) -> PolyMatrix {
        PolyMatrix::new(1, 1, vec![p1(s)]).unwrap()
    }

    fn zero_driver() -> SymbolicDriver {
        SymbolicDriver::new(BernoulliShift::fair(2), vec![WindowFunction::constant(2, 0, 0.0)]).unwrap()
    }

    #[test]
    fn constant_b_has_no_correction() {
        let e = DMatrix::from_element(1, 1, 0.7);
        let drift = drift_correction(vec![p1("x0")], scalar_b("2"), &e).unwrap();
        assert_eq!(drift.correction(&[0.3])[0], 0.0);
        assert_eq!(drift.eval(&[0.3])[0], 0.3);
    }

    #[test]
    fn scalar_linear_b_correction() {
        let e = DMatrix::from_element(1, 1, 0.25);
        let drift = drift_correction(vec![Poly::zero(1)], scalar_b("1 + x0"), &e).unwrap();
        for x in [-1.0, 0.0, 0.5, 2.0] {
            assert!((drift.eval(&[x])[0] - 0.25 * (1.0 + x)).abs() < 1e-15);
        }
    }

    #[test]
    fn two_column_correction_matches_finite_difference() {
        let b = PolyMatrix::new(1, 2, vec![p1("x0"), p1("1")]).unwrap();
        let mut e = DMatrix::zeros(2, 2);
        e[(1, 0)] = 0.6;
        let drift = drift_correction(vec![Poly::zero(1)], b.clone(), &e).unwrap();
        for i in 0..20 {
            let x = [-1.0 + 0.1 * i as f64];
            // E^{21} d b^1 / dx b^{12} = 0.6 * 1 * 1
            assert!((drift.correction(&x)[0] - 0.6).abs() < 1e-15);
            assert!((correction_finite_difference(&b, &e, &x, 1e-5)[0] - 0.6).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_checks() {
        let e = DMatrix::zeros(2, 2);
        assert!(matches!(drift_correction(vec![Poly::zero(1)], scalar_b("1"), &e), Err(HomogenizeError::DimensionMismatch(_))));
        assert!(matches!(drift_correction(vec![], scalar_b("1"), &DMatrix::zeros(1, 1)), Err(HomogenizeError::DimensionMismatch(_))));
        assert!(PolyMatrix::new(1, 2, vec![p1("1")]).is_err());
    }

    #[test]
    fn noise_off_gives_euler_orbit() {
        let spec = FastSlowSpec { a: vec![p1("-x0")], b: scalar_b("1"), epsilon: 0.05, xi: vec![1.0], ensemble: 3, seed: 1 };
        assert_eq!(spec.slow_steps(), 400);
        let x = simulate_fastslow(&spec, &zero_driver()).unwrap();
        let euler = (1.0 - 0.0025f64).powi(400);
        assert!(x.iter().all(|v| (v[0] - euler).abs() < 1e-12));
        assert!((euler - (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn blowup_detected() {
        let spec = FastSlowSpec { a: vec![p1("x0^3")], b: scalar_b("1"), epsilon: 0.1, xi: vec![10.0], ensemble: 1, seed: 1 };
        assert!(matches!(simulate_fastslow(&spec, &zero_driver()), Err(HomogenizeError::SlowVariableBlowup { .. })));
    }

    #[test]
    fn linear_case_covariance() {
        let driver = SymbolicDriver::new(
            BernoulliShift::fair(2),
            vec![WindowFunction::coordinate(2, 0).add_constant(-0.5)],
        )
        .unwrap();
        let spec = FastSlowSpec { a: vec![Poly::zero(1)], b: scalar_b("2"), epsilon: 0.05, xi: vec![0.0], ensemble: 4000, seed: 2 };
        let x = simulate_fastslow(&spec, &driver).unwrap();
        let v = covariance(&x)[0][0];
        // B Sigma B^T = 4 * 0.25
        assert!((v - 1.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn euler_maruyama_examples() {
        let id = DMatrix::identity(2, 2);
        let b = PolyMatrix::constant(&id);
        let bm = SdeSpec {
            drift: CorrectedDrift::plain(vec![Poly::zero(2), Poly::zero(2)], b).unwrap(),
            sigma: id.clone(),
            xi: vec![1.0, -1.0],
            steps: 100,
            ensemble: 20_000,
            seed: 3,
        };
        let z = euler_maruyama(&bm).unwrap();
        let c = covariance(&z);
        assert!((c[0][0] - 1.0).abs() < 0.05 && (c[1][1] - 1.0).abs() < 0.05 && c[0][1].abs() < 0.05);

        let decay = SdeSpec {
            drift: CorrectedDrift::plain(vec![p1("-x0")], scalar_b("0")).unwrap(),
            sigma: DMatrix::identity(1, 1),
            xi: vec![2.0],
            steps: 1000,
            ensemble: 2,
            seed: 4,
        };
        let z = euler_maruyama(&decay).unwrap();
        assert!((z[0][0] - 2.0 * (-1.0f64).exp()).abs() < 2e-3);

        let ou = SdeSpec {
            drift: CorrectedDrift::plain(vec![p1("-x0")], scalar_b("1")).unwrap(),
            sigma: DMatrix::identity(1, 1),
            xi: vec![0.0],
            steps: 200,
            ensemble: 20_000,
            seed: 5,
        };
        let z: Vec<f64> = euler_maruyama(&ou).unwrap().into_iter().map(|v| v[0]).collect();
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((variance(&z) / exact - 1.0).abs() < 0.05);
        assert!(mean(&z).abs() < 0.02);
    }

    #[test]
    fn euler_maruyama_rejects_bad_sigma() {
        let mut sde = SdeSpec {
            drift: CorrectedDrift::plain(vec![Poly::zero(1)], scalar_b("1")).unwrap(),
            sigma: DMatrix::from_element(1, 1, -1.0),
            xi: vec![0.0],
            steps: 100,
            ensemble: 1,
            seed: 0,
        };
        assert!(matches!(euler_maruyama(&sde), Err(HomogenizeError::SigmaNotPSD { .. })));
        sde.sigma = DMatrix::from_element(1, 1, 1.0);
        sde.steps = 10;
        assert!(matches!(euler_maruyama(&sde), Err(HomogenizeError::InvalidSpec(_))));
    }

    #[test]
    fn psd_square_root() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sqrt_psd(&s).unwrap();
        assert!((&r * &r - &s).amax() < 1e-14);
        assert!((&r - r.transpose()).amax() < 1e-15);
        assert!(sqrt_psd(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.1, 1.0])).is_err());
    }

    #[test]
    fn compare_examples() {
        let a: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let (ks, energy) = compare_distributions(&a, &a).unwrap();
        assert_eq!((ks[0], energy), (0.0, 0.0));
        assert!(matches!(compare_distributions(&a, &[]), Err(HomogenizeError::EmptySample)));
    }

    fn matrix_strategy() -> impl Strategy<Value = (PolyMatrix, DMatrix<f64>, Vec<f64>)> {
        (1usize..=2, 1usize..=2).prop_flat_map(|(d, k)| {
            let term = (-1.5f64..1.5, prop::collection::vec(0u32..=3, d));
            let poly = prop::collection::vec(term, 0..5).prop_map(move |terms| {
                let terms = terms
                    .into_iter()
                    .map(|(c, mut e)| {
                        while e.iter().sum::<u32>() > 3 {
                            let i = e.iter().position(|&p| p > 0).unwrap();
                            e[i] -= 1;
                        }
                        (c, e)
                    })
                    .collect();
                Poly::new(d, terms).unwrap()
            });
            (
                prop::collection::vec(poly, d * k).prop_map(move |entries| PolyMatrix::new(d, k, entries).unwrap()),
                prop::collection::vec(-1.0f64..1.0, k * k).prop_map(move |v| DMatrix::from_vec(k, k, v)),
                prop::collection::vec(-1.0f64..1.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn correction_matches_finite_difference((b, e, x) in matrix_strategy()) {
            let d = b.rows();
            let drift = drift_correction(vec![Poly::zero(d); d], b.clone(), &e).unwrap();
            let exact = drift.correction(&x);
            let fd = correction_finite_difference(&b, &e, &x, 1e-5);
            prop_assert!((exact - fd).amax() <= 1e-6);
        }
    }
}
