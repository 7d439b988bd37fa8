//! Turns a parsed [`Config`] into tables, drivers and specifications.

use lorentz_limits::billiard::ScattererTable;
use lorentz_limits::config::{Config, ConfigError, Entry};
use lorentz_limits::homogenize::{Poly, PolyMatrix};
use lorentz_limits::limitlaws::{pilot_mean, Centered, GasObservable, LorentzDriver, SymbolicDriver};
use lorentz_limits::symbolic::{BernoulliShift, WindowFunction};
use nalgebra::DMatrix;
use std::fmt;
use std::path::Path;

/// A failed run, printed as one machine-readable line.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    UnknownSubcommand(String),
    Io(String),
    Experiment(String),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "ConfigParseError",
            RunError::UnknownSubcommand(_) => "UnknownSubcommand",
            RunError::Io(_) => "IoError",
            RunError::Experiment(_) => "ExperimentError",
        }
    }

    /// `error kind=<Kind> line=<n> column=<n> message="<text>"`.
    pub fn machine_line(&self) -> String {
        let (line, column) = match self {
            RunError::Config(ConfigError::Parse { line, column, .. }) => (*line, *column),
            RunError::Config(ConfigError::Invalid { line, .. }) => (*line, 0),
            _ => (0, 0),
        };
        let message = self.to_string().replace('\\', "\\\\").replace('"', "\\\"");
        format!("error kind={} line={line} column={column} message=\"{message}\"", self.kind())
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::UnknownSubcommand(s) => write!(f, "unknown subcommand {s:?}"),
            RunError::Io(s) | RunError::Experiment(s) => write!(f, "{s}"),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

pub fn experiment_err(e: impl fmt::Display) -> RunError {
    RunError::Experiment(e.to_string())
}

pub type RunResult<T> = Result<T, RunError>;

/// `[table]`: repeated `disk = x y r`, optional `cap` (default 50).
pub fn table(cfg: &Config) -> RunResult<ScattererTable> {
    let disks = cfg
        .get_all("table", "disk")
        .map(|e| {
            let v = e.parse_list::<f64>()?;
            match v[..] {
                [x, y, r] => Ok((x, y, r)),
                _ => Err(e.invalid("expected 'x y radius'")),
            }
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    if disks.is_empty() {
        return Err(ConfigError::Missing { section: "table".into(), key: "disk".into() }.into());
    }
    let cap = cfg.value_or("table", "cap", 50.0)?;
    cfg.ensure_only("table", &["disk", "cap"])?;
    ScattererTable::from_disks(&disks, cap).map_err(|e| {
        let entry = cfg.get("table", "disk").expect("disks present");
        entry.invalid(e.to_string()).into()
    })
}

/// `[shift] probabilities = p0 p1 ...`.
pub fn shift(cfg: &Config) -> RunResult<BernoulliShift> {
    let entry = cfg.require("shift", "probabilities")?;
    cfg.ensure_only("shift", &["probabilities"])?;
    BernoulliShift::new(entry.parse_list()?).map_err(|e| entry.invalid(e.to_string()).into())
}

/// One observable component:
/// `coords k1 k2 ...` (sum of coordinates as reals),
/// `table LO HI v0 v1 ...`, or `file PATH` (window CSV).
fn component(entry: &Entry, alphabet: usize, base: &Path) -> RunResult<WindowFunction> {
    let mut words = entry.value.split_whitespace();
    let kind = words.next().unwrap_or("");
    let rest: Vec<&str> = words.collect();
    let nums = |s: &[&str]| -> Result<Vec<f64>, ConfigError> {
        s.iter().map(|w| w.parse::<f64>().map_err(|e| entry.invalid(format!("{w:?}: {e}")))).collect()
    };
    let f = match kind {
        "coords" => {
            if rest.is_empty() {
                return Err(entry.invalid("coords needs at least one index").into());
            }
            let mut f: Option<WindowFunction> = None;
            for w in &rest {
                let k: i64 = w.parse().map_err(|e| entry.invalid(format!("{w:?}: {e}")))?;
                let c = WindowFunction::coordinate(alphabet, k);
                f = Some(match f {
                    None => c,
                    Some(g) => g.add(&c).map_err(|e| entry.invalid(e.to_string()))?,
                });
            }
            f.expect("non-empty")
        }
        "table" => {
            if rest.len() < 3 {
                return Err(entry.invalid("table needs LO HI and values").into());
            }
            let lo: i64 = rest[0].parse().map_err(|_| entry.invalid("bad LO"))?;
            let hi: i64 = rest[1].parse().map_err(|_| entry.invalid("bad HI"))?;
            WindowFunction::new(lo, hi, alphabet, nums(&rest[2..])?).map_err(|e| entry.invalid(e.to_string()))?
        }
        "file" => {
            let path = base.join(rest.join(" "));
            let file = std::fs::File::open(&path).map_err(|e| entry.invalid(format!("{}: {e}", path.display())))?;
            WindowFunction::read_csv(std::io::BufReader::new(file)).map_err(|e| entry.invalid(e.to_string()))?
        }
        _ => return Err(entry.invalid("expected 'coords', 'table' or 'file'").into()),
    };
    if f.alphabet() != alphabet {
        return Err(entry.invalid("alphabet does not match the shift").into());
    }
    Ok(f)
}

/// `[observable]`: repeated `component = ...`, `center = true|false`
/// (subtract the exact mean, default true).
pub fn observables(cfg: &Config, shift: &BernoulliShift, base: &Path) -> RunResult<Vec<WindowFunction>> {
    cfg.ensure_only("observable", &["component", "center"])?;
    let center: bool = cfg.value_or("observable", "center", true)?;
    let comps = cfg
        .get_all("observable", "component")
        .map(|e| component(e, shift.alphabet_size(), base))
        .collect::<RunResult<Vec<_>>>()?;
    if comps.is_empty() {
        return Err(ConfigError::Missing { section: "observable".into(), key: "component".into() }.into());
    }
    Ok(comps.into_iter().map(|f| if center { f.add_constant(-shift.expectation(&f)) } else { f }).collect())
}

/// Driver selected by `[driver] kind = symbolic | lorentz`.
pub enum AnyDriver {
    Symbolic(Centered<SymbolicDriver>),
    Lorentz(Centered<LorentzDriver>),
}

impl AnyDriver {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyDriver::Symbolic(_) => "symbolic",
            AnyDriver::Lorentz(_) => "lorentz",
        }
    }

    /// Exact `(Sigma, E)` when the driver is symbolic.
    pub fn exact_correlations(&self) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            AnyDriver::Symbolic(d) => d.inner().exact_correlations().ok(),
            AnyDriver::Lorentz(_) => None,
        }
    }
}

/// Dispatches a generic body over the concrete driver type.
#[macro_export]
macro_rules! with_driver {
    ($any:expr, |$d:ident| $body:expr) => {
        match $any {
            $crate::setup::AnyDriver::Symbolic($d) => $body,
            $crate::setup::AnyDriver::Lorentz($d) => $body,
        }
    };
}

/// `[driver] kind`, plus for the gas `observables = cos_theta sin_theta` and
/// `center = exact | pilot` (`pilot_steps`, default 10^6).
pub fn driver(cfg: &Config, seed: u64, base: &Path) -> RunResult<AnyDriver> {
    let kind: String = cfg.value("driver", "kind")?;
    match kind.as_str() {
        "symbolic" => {
            cfg.ensure_only("driver", &["kind"])?;
            let s = shift(cfg)?;
            let obs = observables(cfg, &s, base)?;
            let d = SymbolicDriver::new(s, obs).map_err(|e| cfg.require("observable", "component").unwrap().invalid(e.to_string()))?;
            let k = d.observables().len();
            Ok(AnyDriver::Symbolic(Centered::new(d, vec![0.0; k]).expect("dimensions match")))
        }
        "lorentz" => {
            cfg.ensure_only("driver", &["kind", "observables", "center", "pilot_steps"])?;
            let t = table(cfg)?;
            let obs = match cfg.get("driver", "observables") {
                Some(e) => e
                    .value
                    .split_whitespace()
                    .map(|w| GasObservable::parse(w).ok_or_else(|| e.invalid(format!("unknown observable {w:?}"))))
                    .collect::<Result<Vec<_>, _>>()?,
                None => vec![GasObservable::CosTheta],
            };
            let d = LorentzDriver::new(t, obs).map_err(experiment_err)?;
            let center: String = cfg.value_or("driver", "center", "exact".to_string())?;
            let means = match center.as_str() {
                "exact" => d.exact_means(),
                "pilot" => {
                    let steps = cfg.value_or("driver", "pilot_steps", 1_000_000usize)?;
                    pilot_mean(&d, steps, seed).map_err(experiment_err)?
                }
                _ => return Err(cfg.get("driver", "center").unwrap().invalid("expected 'exact' or 'pilot'").into()),
            };
            Ok(AnyDriver::Lorentz(Centered::new(d, means).expect("dimensions match")))
        }
        _ => Err(cfg.get("driver", "kind").unwrap().invalid("expected 'symbolic' or 'lorentz'").into()),
    }
}

/// `;`-separated polynomials in `d` variables.
pub fn polys(entry: &Entry, d: usize) -> RunResult<Vec<Poly>> {
    entry.value.split(';').map(|s| Poly::parse(d, s.trim()).map_err(|e| entry.invalid(e.to_string()).into())).collect()
}

/// `a` (d components) and `b` (d*k row-major components) from `section`.
pub fn coefficients(cfg: &Config, section: &str) -> RunResult<(Vec<Poly>, PolyMatrix)> {
    let d: usize = cfg.value(section, "d")?;
    let k: usize = cfg.value(section, "k")?;
    let a_entry = cfg.require(section, "a")?;
    let a = polys(a_entry, d)?;
    if a.len() != d {
        return Err(a_entry.invalid(format!("expected {d} components")).into());
    }
    let b_entry = cfg.require(section, "b")?;
    let b = PolyMatrix::new(d, k, polys(b_entry, d)?).map_err(|e| b_entry.invalid(e.to_string()))?;
    Ok((a, b))
}

/// `k x k` matrix from a row-major list.
pub fn matrix(entry: &Entry, k: usize) -> RunResult<DMatrix<f64>> {
    let v: Vec<f64> = entry.parse_list()?;
    if v.len() != k * k {
        return Err(entry.invalid(format!("expected {} entries", k * k)).into());
    }
    Ok(DMatrix::from_row_slice(k, k, &v))
}
