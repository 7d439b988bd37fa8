//! Python module `lorentz_limits`: shifts, window functions, the exact
//! decomposition, billiard diagnostics, limit-law ensembles and the
//! homogenized SDE. Matrices cross the boundary as lists of rows.

use ::lorentz_limits::billiard as bl;
use ::lorentz_limits::homogenize as hm;
use ::lorentz_limits::limitlaws as ll;
use ::lorentz_limits::martdecomp as md;
use ::lorentz_limits::symbolic as sy;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

type Rows = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix(r: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = r.len();
    let k = r.first().map_or(0, Vec::len);
    if r.iter().any(|row| row.len() != k) {
        return Err(err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| r[i][j]))
}

#[pyclass(name = "BernoulliShift", module = "lorentz_limits", skip_from_py_object)]
#[derive(Clone)]
struct PyShift(sy::BernoulliShift);

#[pymethods]
impl PyShift {
    #[new]
    fn new(probabilities: Vec<f64>) -> PyResult<Self> {
        sy::BernoulliShift::new(probabilities).map(Self).map_err(err)
    }

    #[staticmethod]
    fn fair(alphabet: usize) -> Self {
        Self(sy::BernoulliShift::fair(alphabet))
    }

    #[getter]
    fn probabilities(&self) -> Vec<f64> {
        self.0.probabilities().to_vec()
    }

    #[getter]
    fn alphabet_size(&self) -> usize {
        self.0.alphabet_size()
    }

    fn expectation(&self, f: PyRef<'_, PyWindow>) -> f64 {
        self.0.expectation(&f.0)
    }

    /// `E[f . g o T^n]`.
    fn correlation(&self, f: PyRef<'_, PyWindow>, g: PyRef<'_, PyWindow>, n: i64) -> PyResult<f64> {
        self.0.correlation(&f.0, &g.0, n).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("BernoulliShift({:?})", self.0.probabilities())
    }
}

/// Function of the coordinates `x_lo..x_hi`; `table[i]` is the value on the
/// word whose base-`alphabet` digits (least significant first) are `i`.
#[pyclass(name = "WindowFunction", module = "lorentz_limits", skip_from_py_object)]
#[derive(Clone)]
struct PyWindow(sy::WindowFunction);

#[pymethods]
impl PyWindow {
    #[new]
    fn new(lo: i64, hi: i64, alphabet: usize, table: Vec<f64>) -> PyResult<Self> {
        sy::WindowFunction::new(lo, hi, alphabet, table).map(Self).map_err(err)
    }

    #[staticmethod]
    fn coordinate(alphabet: usize, k: i64) -> Self {
        Self(sy::WindowFunction::coordinate(alphabet, k))
    }

    #[getter]
    fn lo(&self) -> i64 {
        self.0.lo()
    }

    #[getter]
    fn hi(&self) -> i64 {
        self.0.hi()
    }

    #[getter]
    fn alphabet(&self) -> usize {
        self.0.alphabet()
    }

    #[getter]
    fn table(&self) -> Vec<f64> {
        self.0.table().to_vec()
    }

    /// Value on `word = [x_lo, ..., x_hi]`.
    fn __call__(&self, word: Vec<usize>) -> PyResult<f64> {
        if word.len() != self.0.len() {
            return Err(err(format!("expected {} symbols", self.0.len())));
        }
        let lo = self.0.lo();
        Ok(self.0.evaluate(|k| word[(k - lo) as usize]))
    }

    fn shift(&self, n: i64) -> Self {
        Self(self.0.shift(n))
    }

    fn add_constant(&self, c: f64) -> Self {
        Self(self.0.add_constant(c))
    }

    fn scale(&self, c: f64) -> Self {
        Self(self.0.scale(c))
    }

    fn __add__(&self, other: PyRef<'_, PyWindow>) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(err)
    }

    fn __sub__(&self, other: PyRef<'_, PyWindow>) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(err)
    }

    fn __mul__(&self, other: PyRef<'_, PyWindow>) -> PyResult<Self> {
        self.0.mul(&other.0).map(Self).map_err(err)
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn __repr__(&self) -> String {
        format!("WindowFunction(lo={}, hi={}, alphabet={}, table={:?})", self.0.lo(), self.0.hi(), self.0.alphabet(), self.0.table())
    }
}

/// `phi = m + chi o T - chi` with `m` a reverse martingale difference.
#[pyclass(name = "Decomposition", module = "lorentz_limits", get_all)]
struct PyDecomposition {
    phi: PyWindow,
    m: PyWindow,
    chi: PyWindow,
    residual_decomposition: f64,
    residual_martingale: f64,
    sigma2_from_m: f64,
    sigma2_green_kubo: f64,
}

#[pyfunction]
fn decompose(shift: PyRef<'_, PyShift>, phi: PyRef<'_, PyWindow>) -> PyResult<PyDecomposition> {
    let r = md::decompose(&shift.0, &phi.0).map_err(err)?;
    Ok(PyDecomposition {
        phi: PyWindow(r.phi),
        m: PyWindow(r.m),
        chi: PyWindow(r.chi),
        residual_decomposition: r.residual_decomposition,
        residual_martingale: r.residual_martingale,
        sigma2_from_m: r.sigma2_from_m,
        sigma2_green_kubo: r.sigma2_green_kubo,
    })
}

/// `(past, future)` norm sequences of the projective conditions.
#[pyfunction]
fn condition_decay_profile(
    shift: PyRef<'_, PyShift>,
    phi: PyRef<'_, PyWindow>,
    p: f64,
    n_max: usize,
) -> (Vec<f64>, Vec<f64>) {
    md::condition_decay_profile(&shift.0, &phi.0, p, n_max)
}

#[pyclass(name = "ScattererTable", module = "lorentz_limits", skip_from_py_object)]
#[derive(Clone)]
struct PyTable(bl::ScattererTable);

#[pymethods]
impl PyTable {
    /// `disks` is a list of `(x, y, radius)` in the unit torus.
    #[new]
    #[pyo3(signature = (disks, cap = 50.0))]
    fn new(disks: Vec<(f64, f64, f64)>, cap: f64) -> PyResult<Self> {
        bl::ScattererTable::from_disks(&disks, cap).map(Self).map_err(err)
    }

    /// The shipped finite-horizon table.
    #[staticmethod]
    fn reference() -> Self {
        Self(bl::ScattererTable::reference())
    }

    #[getter]
    fn tau_min_lower(&self) -> f64 {
        self.0.tau_min_lower()
    }

    fn hyperbolicity_constant(&self) -> f64 {
        bl::hyperbolicity_constant(&self.0)
    }

    fn estimate_horizon<'py>(&self, py: Python<'py>, samples: usize, cap: f64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = bl::estimate_horizon(&self.0, samples, cap, seed);
        let d = PyDict::new(py);
        d.set_item("tau_max_estimate", r.tau_max_estimate)?;
        d.set_item("tau_min_observed", r.tau_min_observed)?;
        d.set_item("cap_exceeded", r.cap_exceeded)?;
        d.set_item("samples", r.samples)?;
        Ok(d)
    }

    /// `[(map, coordinate, ks)]` for the pushforwards of the invariant laws.
    fn invariance_check(&self, samples: usize, seed: u64) -> PyResult<Vec<(String, String, f64)>> {
        let rows = bl::invariance_check(&self.0, samples, seed).map_err(err)?;
        Ok(rows.into_iter().map(|r| (r.map.to_string(), r.coordinate.to_string(), r.ks)).collect())
    }
}

enum Inner {
    Symbolic(ll::SymbolicDriver),
    Lorentz(ll::Centered<ll::LorentzDriver>),
}

macro_rules! dispatch {
    ($inner:expr, |$d:ident| $body:expr) => {
        match $inner {
            Inner::Symbolic($d) => $body,
            Inner::Lorentz($d) => $body,
        }
    };
}

/// Observable process driven by a Bernoulli shift or the Lorentz gas.
#[pyclass(name = "Driver", module = "lorentz_limits")]
struct PyDriver(Inner);

#[pymethods]
impl PyDriver {
    /// Observables must be mean zero.
    #[staticmethod]
    fn symbolic(shift: PyRef<'_, PyShift>, observables: Vec<PyRef<'_, PyWindow>>) -> PyResult<Self> {
        let obs = observables.iter().map(|w| w.0.clone()).collect();
        ll::SymbolicDriver::new(shift.0.clone(), obs).map(|d| Self(Inner::Symbolic(d))).map_err(err)
    }

    /// Time-one map of the gas; observables among `cos_theta`, `sin_theta`,
    /// centered by their exact means.
    #[staticmethod]
    #[pyo3(signature = (table, observables = vec!["cos_theta".to_string()]))]
    fn lorentz(table: PyRef<'_, PyTable>, observables: Vec<String>) -> PyResult<Self> {
        let obs = observables
            .iter()
            .map(|s| ll::GasObservable::parse(s).ok_or_else(|| err(format!("unknown observable {s:?}"))))
            .collect::<PyResult<Vec<_>>>()?;
        let d = ll::LorentzDriver::new(table.0.clone(), obs).map_err(err)?;
        let means = d.exact_means();
        ll::Centered::new(d, means).map(|d| Self(Inner::Lorentz(d))).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        use ll::Driver;
        dispatch!(&self.0, |d| d.dim())
    }

    /// Exact `(Sigma, E)`; symbolic drivers only.
    fn exact_correlations(&self) -> PyResult<(Rows, Rows)> {
        match &self.0 {
            Inner::Symbolic(d) => d.exact_correlations().map(|(s, e)| (rows(&s), rows(&e))).map_err(err),
            Inner::Lorentz(_) => Err(err("exact correlations need the symbolic driver")),
        }
    }

    fn green_kubo<'py>(
        &self,
        py: Python<'py>,
        n_max: usize,
        trajectory: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| dispatch!(&self.0, |d| ll::green_kubo(d, n_max, trajectory, seed))).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("sigma", rows(&r.sigma))?;
        out.set_item("e", rows(&r.e))?;
        out.set_item("truncation_lag", r.truncation_lag)?;
        out.set_item("tail_diagnostic", r.tail_diagnostic)?;
        out.set_item("noise_floor", r.noise_floor)?;
        Ok(out)
    }

    /// `(ks_statistic, samples)` of `S_n / sqrt(n)` against `N(0, sigma2)`.
    fn clt(&self, py: Python<'_>, n: usize, members: usize, sigma2: f64, seed: u64) -> PyResult<(f64, Vec<f64>)> {
        let r = py.detach(|| dispatch!(&self.0, |d| ll::clt_test(d, n, members, sigma2, seed))).map_err(err)?;
        Ok((r.ks_statistic, r.samples))
    }

    /// `[(p, n, scaled_moment, std_error)]`.
    fn moments(
        &self,
        py: Python<'_>,
        p: Vec<f64>,
        n: Vec<usize>,
        members: usize,
        seed: u64,
    ) -> PyResult<Vec<(f64, usize, f64, f64)>> {
        let r = py.detach(|| dispatch!(&self.0, |d| ll::moment_scaling(d, &p, &n, members, seed))).map_err(err)?;
        Ok(r.into_iter().map(|m| (m.p, m.n, m.scaled_moment, m.std_error)).collect())
    }

    fn iterated<'py>(&self, py: Python<'py>, n: usize, members: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let r = py.detach(|| dispatch!(&self.0, |d| ll::iterated_sums(d, n, members, seed))).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("mean_ww", rows(&r.mean_ww))?;
        out.set_item("std_error_ww", rows(&r.std_error_ww))?;
        out.set_item("max_symmetrization_residual", r.max_symmetrization_residual)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    /// Terminal slow states of `dx = a dt + eps^-1 b v dt` at time 1.
    /// `a` and `b` are polynomial strings in `x0, x1, ...`; `b` is `d x k`.
    fn fastslow(
        &self,
        py: Python<'_>,
        a: Vec<String>,
        b: Vec<Vec<String>>,
        epsilon: f64,
        xi: Vec<f64>,
        members: usize,
        seed: u64,
    ) -> PyResult<Vec<Vec<f64>>> {
        let (a, b) = coefficients(&a, &b)?;
        let spec = hm::FastSlowSpec { a, b, epsilon, xi, ensemble: members, seed };
        py.detach(|| dispatch!(&self.0, |d| hm::simulate_fastslow(&spec, d))).map_err(err)
    }
}

fn coefficients(a: &[String], b: &[Vec<String>]) -> PyResult<(Vec<hm::Poly>, hm::PolyMatrix)> {
    let d = a.len();
    let a = a.iter().map(|s| hm::Poly::parse(d, s).map_err(err)).collect::<PyResult<Vec<_>>>()?;
    let k = b.first().map_or(0, Vec::len);
    let entries = b.iter().flatten().map(|s| hm::Poly::parse(d, s).map_err(err)).collect::<PyResult<Vec<_>>>()?;
    if b.len() != d || entries.len() != d * k {
        return Err(err("b must be a d x k matrix"));
    }
    Ok((a, hm::PolyMatrix::new(d, k, entries).map_err(err)?))
}

/// Corrected drift `a + sum E b' b` evaluated at `x`.
#[pyfunction]
fn corrected_drift(a: Vec<String>, b: Vec<Vec<String>>, e: Vec<Vec<f64>>, x: Vec<f64>) -> PyResult<Vec<f64>> {
    let (a, b) = coefficients(&a, &b)?;
    let drift = hm::drift_correction(a, b, &matrix(&e)?).map_err(err)?;
    if x.len() != drift.dim() {
        return Err(err("x has the wrong dimension"));
    }
    Ok(drift.eval(&x).iter().copied().collect())
}

/// Euler-Maruyama samples of the limit SDE at time 1.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn euler_maruyama(
    py: Python<'_>,
    a: Vec<String>,
    b: Vec<Vec<String>>,
    sigma: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    xi: Vec<f64>,
    steps: usize,
    members: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let (a, b) = coefficients(&a, &b)?;
    let drift = hm::drift_correction(a, b, &matrix(&e)?).map_err(err)?;
    let spec = hm::SdeSpec { drift, sigma: matrix(&sigma)?, xi, steps, ensemble: members, seed };
    py.detach(|| hm::euler_maruyama(&spec)).map_err(err)
}

#[pymodule]
#[pyo3(name = "lorentz_limits")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyShift>()?;
    m.add_class::<PyWindow>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyDriver>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(condition_decay_profile, m)?)?;
    m.add_function(wrap_pyfunction!(corrected_drift, m)?)?;
    m.add_function(wrap_pyfunction!(euler_maruyama, m)?)?;
    Ok(())
}
