//! One function per subcommand. Each parses its configuration completely
//! before doing any work, so `--dry-run` validates without computing.

use crate::setup::{self, experiment_err, AnyDriver, RunError, RunResult};
use crate::with_driver;
use lorentz_limits::billiard::{
    contraction_sample, estimate_horizon, hyperbolicity_constant, invariance_check,
};
use lorentz_limits::config::{Config, ConfigError};
use lorentz_limits::csv_row;
use lorentz_limits::homogenize::{
    compare_distributions, drift_correction, euler_maruyama, simulate_fastslow, FastSlowSpec, SdeSpec,
};
use lorentz_limits::limitlaws::{
    clt_test, green_kubo, iterated_sums, moment_scaling, moment_target, return_time_tail, wip_marginals, Driver,
    LorentzDriver,
};
use lorentz_limits::martdecomp::{check_condition_a, check_condition_b, condition_decay_profile, decompose};
use lorentz_limits::report::{fmt_f64, read_numeric_csv, CsvTable};
use lorentz_limits::stats::{covariance, ks_band, mean};
use lorentz_limits::symbolic::WindowFunction;
use nalgebra::DMatrix;
use std::path::PathBuf;

pub const SUBCOMMANDS: [&str; 14] = [
    "horizon",
    "hyperbolicity",
    "invariance-check",
    "green-kubo",
    "clt",
    "wip",
    "moments",
    "iterated",
    "decompose",
    "condition-profiles",
    "return-tail",
    "fastslow",
    "sde",
    "compare",
];

pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    /// Directory relative paths in the config are resolved against.
    pub base: PathBuf,
    pub dry_run: bool,
}

/// Files and summary lines produced by a run.
#[derive(Default)]
pub struct Output {
    pub tables: Vec<(String, CsvTable)>,
    /// Window functions in their own CSV form.
    pub windows: Vec<(String, WindowFunction)>,
    pub summary: Vec<(String, String)>,
}

impl Output {
    fn table(&mut self, name: &str, t: CsvTable) {
        self.tables.push((name.to_string(), t));
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }
}

pub fn run(name: &str, ctx: &Ctx) -> RunResult<Output> {
    match name {
        "horizon" => horizon(ctx),
        "hyperbolicity" => hyperbolicity(ctx),
        "invariance-check" => invariance(ctx),
        "green-kubo" => green_kubo_cmd(ctx),
        "clt" => clt(ctx),
        "wip" => wip(ctx),
        "moments" => moments(ctx),
        "iterated" => iterated(ctx),
        "decompose" => decompose_cmd(ctx),
        "condition-profiles" => profiles(ctx),
        "return-tail" => return_tail(ctx),
        "fastslow" => fastslow(ctx),
        "sde" => sde(ctx),
        "compare" => compare(ctx),
        other => Err(RunError::UnknownSubcommand(other.to_string())),
    }
}

fn horizon(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let table = setup::table(cfg)?;
    cfg.ensure_only("horizon", &["samples", "cap"])?;
    let samples = cfg.value_or("horizon", "samples", 100_000usize)?;
    let cap = cfg.value_or("horizon", "cap", table.cap())?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let r = estimate_horizon(&table, samples, cap, ctx.seed);
    let mut t = CsvTable::new(&["tau_max_estimate", "tau_min_observed", "tau_min_lower", "cap_exceeded", "samples", "cap"]);
    t.push(csv_row![r.tau_max_estimate, r.tau_min_observed, table.tau_min_lower(), r.cap_exceeded, r.samples, cap]);
    out.table("horizon.csv", t);
    out.note("cap_exceeded", r.cap_exceeded);
    out.note("tau_max_estimate", fmt_f64(r.tau_max_estimate));
    out.note("tau_min_observed", fmt_f64(r.tau_min_observed));
    Ok(out)
}

fn hyperbolicity(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let table = setup::table(cfg)?;
    cfg.ensure_only("hyperbolicity", &["points", "steps", "perturbation", "horizon_samples"])?;
    let points = cfg.value_or("hyperbolicity", "points", 100usize)?;
    let steps = cfg.value_or("hyperbolicity", "steps", 2usize)?;
    let delta = cfg.value_or("hyperbolicity", "perturbation", 1e-8)?;
    let horizon_samples = cfg.value_or("hyperbolicity", "horizon_samples", 100_000usize)?;
    if !(delta > 0.0 && delta <= 1e-6) {
        return Err(cfg.get("hyperbolicity", "perturbation").unwrap().invalid("must lie in (0, 1e-6]").into());
    }
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let lambda = hyperbolicity_constant(&table);
    let horizon = estimate_horizon(&table, horizon_samples, table.cap(), ctx.seed);
    let bound = lambda.ln() / horizon.tau_max_estimate;
    let estimates = contraction_sample(&table, points, steps, delta, ctx.seed).map_err(experiment_err)?;
    let mut t = CsvTable::new(&["lambda", "tau_min_lower", "curvature_min", "tau_max_estimate", "rate_bound"]);
    t.push(csv_row![lambda, table.tau_min_lower(), table.curvature_min(), horizon.tau_max_estimate, bound]);
    out.table("hyperbolicity.csv", t);
    let mut rates = CsvTable::new(&["point", "stable_rate", "unstable_rate", "flow_rate"]);
    for (i, e) in estimates.iter().enumerate() {
        rates.push(csv_row![i, e.stable_rate, e.unstable_rate, e.flow_rate]);
    }
    out.table("contraction.csv", rates);
    let worst_stable = estimates.iter().map(|e| e.stable_rate).fold(f64::NEG_INFINITY, f64::max);
    out.note("lambda", fmt_f64(lambda));
    out.note("rate_bound", fmt_f64(bound));
    out.note("max_stable_rate", fmt_f64(worst_stable));
    Ok(out)
}

fn invariance(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let table = setup::table(cfg)?;
    cfg.ensure_only("invariance-check", &["samples"])?;
    let samples = cfg.value_or("invariance-check", "samples", 100_000usize)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let rows = invariance_check(&table, samples, ctx.seed).map_err(experiment_err)?;
    let threshold = ks_band(samples);
    let mut t = CsvTable::new(&["map", "coordinate", "ks", "threshold", "pass"]);
    for r in &rows {
        t.push(csv_row![r.map, r.coordinate, r.ks, threshold, r.ks <= threshold]);
    }
    out.table("invariance.csv", t);
    out.note("all_pass", rows.iter().all(|r| r.ks <= threshold));
    Ok(out)
}

fn driver(ctx: &Ctx) -> RunResult<AnyDriver> {
    setup::driver(&ctx.cfg, ctx.seed, &ctx.base)
}

fn dim(d: &AnyDriver) -> usize {
    with_driver!(d, |x| x.dim())
}

/// `sigma2 = exact | green-kubo | <number>` in `section`.
fn sigma2(ctx: &Ctx, section: &str, d: &AnyDriver) -> RunResult<Option<(f64, String)>> {
    let cfg = &ctx.cfg;
    let entry = match cfg.get(section, "sigma2") {
        Some(e) => e,
        None => return Ok(None),
    };
    let n_max = cfg.value_or(section, "n_max", 100usize)?;
    let trajectory = cfg.value_or(section, "trajectory", 1_000_000usize)?;
    match entry.value.as_str() {
        "exact" => match d {
            AnyDriver::Symbolic(s) => {
                if ctx.dry_run {
                    return Ok(Some((f64::NAN, "exact".into())));
                }
                let inner = s.inner();
                let r = decompose(inner.shift(), &inner.observables()[0]).map_err(experiment_err)?;
                Ok(Some((r.sigma2_from_m, "exact".into())))
            }
            AnyDriver::Lorentz(_) => Err(entry.invalid("exact variance needs the symbolic driver").into()),
        },
        "green-kubo" => {
            if ctx.dry_run {
                return Ok(Some((f64::NAN, "green-kubo".into())));
            }
            let gk = with_driver!(d, |x| green_kubo(x, n_max, trajectory, ctx.seed)).map_err(experiment_err)?;
            Ok(Some((gk.sigma[(0, 0)], "green-kubo".into())))
        }
        _ => Ok(Some((entry.parse()?, "given".into()))),
    }
}

fn require_sigma2(ctx: &Ctx, section: &str, d: &AnyDriver) -> RunResult<(f64, String)> {
    sigma2(ctx, section, d)?
        .ok_or_else(|| ConfigError::Missing { section: section.to_string(), key: "sigma2".into() }.into())
}

fn green_kubo_cmd(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("green-kubo", &["n_max", "trajectory"])?;
    let n_max = cfg.value_or("green-kubo", "n_max", 100usize)?;
    let trajectory = cfg.value_or("green-kubo", "trajectory", 1_000_000usize)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let gk = with_driver!(&d, |x| green_kubo(x, n_max, trajectory, ctx.seed)).map_err(experiment_err)?;
    let exact = d.exact_correlations();
    let k = gk.sigma.nrows();
    let mut t = CsvTable::new(&["beta", "gamma", "sigma_hat", "e_hat", "sigma_exact", "e_exact"]);
    for b in 0..k {
        for c in 0..k {
            let (se, ee) = exact.as_ref().map_or((f64::NAN, f64::NAN), |(s, e)| (s[(b, c)], e[(b, c)]));
            t.push(csv_row![b + 1, c + 1, gk.sigma[(b, c)], gk.e[(b, c)], se, ee]);
        }
    }
    out.table("green_kubo.csv", t);
    let mut ac = CsvTable::new(&["lag", "beta", "gamma", "autocovariance"]);
    for (lag, m) in gk.autocovariance.iter().enumerate() {
        for b in 0..k {
            for c in 0..k {
                ac.push(csv_row![lag, b + 1, c + 1, m[(b, c)]]);
            }
        }
    }
    out.table("autocovariance.csv", ac);
    out.note("driver", d.kind());
    out.note("truncation_lag", gk.truncation_lag);
    out.note("tail_diagnostic", fmt_f64(gk.tail_diagnostic));
    out.note("noise_floor", fmt_f64(gk.noise_floor));
    Ok(out)
}

fn clt(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("clt", &["n", "members", "sigma2", "n_max", "trajectory"])?;
    let n: usize = cfg.value("clt", "n")?;
    let members: usize = cfg.value("clt", "members")?;
    let (s2, source) = require_sigma2(ctx, "clt", &d)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let r = with_driver!(&d, |x| clt_test(x, n, members, s2, ctx.seed)).map_err(experiment_err)?;
    let mut t = CsvTable::new(&["n", "members", "sigma2", "sigma2_source", "ks_statistic"]);
    t.push(csv_row![n, members, s2, source.as_str(), r.ks_statistic]);
    out.table("clt.csv", t);
    let mut s = CsvTable::new(&["member", "scaled_sum"]);
    for (i, v) in r.samples.iter().enumerate() {
        s.push(csv_row![i, *v]);
    }
    out.table("clt_samples.csv", s);
    out.note("ks_statistic", fmt_f64(r.ks_statistic));
    out.note("sigma2", fmt_f64(s2));
    Ok(out)
}

fn wip(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("wip", &["n", "members", "times", "sigma2", "n_max", "trajectory"])?;
    let n: usize = cfg.value("wip", "n")?;
    let members: usize = cfg.value("wip", "members")?;
    let times: Vec<f64> = cfg.require("wip", "times")?.parse_list()?;
    let (s2, _) = require_sigma2(ctx, "wip", &d)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let r = with_driver!(&d, |x| wip_marginals(x, n, members, &times, s2, ctx.seed)).map_err(experiment_err)?;
    let mut t = CsvTable::new(&["s", "t", "covariance", "brownian_target"]);
    for (i, &s) in times.iter().enumerate() {
        for (j, &u) in times.iter().enumerate() {
            t.push(csv_row![s, u, r.covariance[(i, j)], r.target[(i, j)]]);
        }
    }
    out.table("wip.csv", t);
    out.note("max_deviation", fmt_f64(r.max_deviation));
    out.note("relative_max_deviation", fmt_f64(r.max_deviation / s2));
    Ok(out)
}

fn moments(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("moments", &["p", "n", "members", "sigma2", "n_max", "trajectory"])?;
    let ps: Vec<f64> = cfg.require("moments", "p")?.parse_list()?;
    let ns: Vec<usize> = cfg.require("moments", "n")?.parse_list()?;
    let members: usize = cfg.value("moments", "members")?;
    let s2 = sigma2(ctx, "moments", &d)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let rows = with_driver!(&d, |x| moment_scaling(x, &ps, &ns, members, ctx.seed)).map_err(experiment_err)?;
    let mut t = CsvTable::new(&["p", "n", "scaled_moment", "std_error", "gaussian_target"]);
    for r in &rows {
        let target = s2.as_ref().map_or(f64::NAN, |(s, _)| moment_target(*s, r.p));
        t.push(csv_row![r.p, r.n, r.scaled_moment, r.std_error, target]);
    }
    out.table("moments.csv", t);
    out.note("rows", rows.len());
    Ok(out)
}

fn iterated(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("iterated", &["n", "members"])?;
    let n: usize = cfg.value("iterated", "n")?;
    let members: usize = cfg.value("iterated", "members")?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let r = with_driver!(&d, |x| iterated_sums(x, n, members, ctx.seed)).map_err(experiment_err)?;
    let exact = d.exact_correlations();
    let k = r.mean_ww.nrows();
    let mut t = CsvTable::new(&["beta", "gamma", "mean_iterated", "std_error", "e_exact"]);
    for b in 0..k {
        for c in 0..k {
            let e = exact.as_ref().map_or(f64::NAN, |(_, e)| e[(b, c)]);
            t.push(csv_row![b + 1, c + 1, r.mean_ww[(b, c)], r.std_error_ww[(b, c)], e]);
        }
    }
    out.table("iterated.csv", t);
    out.note("max_symmetrization_residual", fmt_f64(r.max_symmetrization_residual));
    Ok(out)
}

fn symbolic_observables(ctx: &Ctx) -> RunResult<(lorentz_limits::symbolic::BernoulliShift, Vec<WindowFunction>)> {
    let shift = setup::shift(&ctx.cfg)?;
    let obs = setup::observables(&ctx.cfg, &shift, &ctx.base)?;
    Ok((shift, obs))
}

fn decompose_cmd(ctx: &Ctx) -> RunResult<Output> {
    let (shift, obs) = symbolic_observables(ctx)?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let mut t = CsvTable::new(&[
        "observable",
        "residual_decomposition",
        "residual_martingale",
        "sigma2_from_m",
        "sigma2_green_kubo",
        "degenerate",
    ]);
    for (i, phi) in obs.iter().enumerate() {
        let r = decompose(&shift, phi).map_err(experiment_err)?;
        t.push(csv_row![
            i + 1,
            r.residual_decomposition,
            r.residual_martingale,
            r.sigma2_from_m,
            r.sigma2_green_kubo,
            r.is_degenerate()
        ]);
        out.windows.push((format!("m_{}.csv", i + 1), r.m));
        out.windows.push((format!("chi_{}.csv", i + 1), r.chi));
    }
    out.table("decompose.csv", t);
    out.note("observables", obs.len());
    Ok(out)
}

fn profiles(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let (shift, obs) = symbolic_observables(ctx)?;
    cfg.ensure_only("condition-profiles", &["p", "n_max", "psi"])?;
    let p = cfg.value_or("condition-profiles", "p", 2.0)?;
    let n_max = cfg.value_or("condition-profiles", "n_max", 10usize)?;
    let psi = match cfg.get("condition-profiles", "psi") {
        Some(e) => {
            let mut one = Config::default();
            one.set("observable", "component", e.value.clone());
            one.set("observable", "center", "false");
            setup::observables(&one, &shift, &ctx.base).map_err(|err| match err {
                RunError::Config(c) => RunError::Config(e.invalid(c.to_string())),
                other => other,
            })?[0]
                .clone()
        }
        None => WindowFunction::coordinate(shift.alphabet_size(), 0),
    };
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let mut t = CsvTable::new(&["observable", "n", "past_norm", "future_norm", "condition_a", "condition_b"]);
    for (i, phi) in obs.iter().enumerate() {
        let (past, future) = condition_decay_profile(&shift, phi, p, n_max);
        let a = check_condition_a(&shift, phi, &psi, n_max).map_err(experiment_err)?;
        let b = check_condition_b(phi, n_max);
        let cell = |v: Option<&f64>| v.map_or(String::new(), |x| fmt_f64(*x));
        for n in 0..=n_max {
            let past_n = if n == 0 { None } else { past.get(n - 1) };
            t.push(vec![
                (i + 1).to_string(),
                n.to_string(),
                cell(past_n),
                cell(future.get(n)),
                cell(a.get(n)),
                cell(b.get(n)),
            ]);
        }
    }
    out.table("profiles.csv", t);
    Ok(out)
}

fn return_tail(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("return-tail", &["n_max", "trajectory", "set"])?;
    let n_max = cfg.value_or("return-tail", "n_max", 20usize)?;
    let trajectory = cfg.value_or("return-tail", "trajectory", 1_000_000usize)?;
    let set_entry = cfg.require("return-tail", "set")?;
    let words: Vec<&str> = set_entry.value.split_whitespace().collect();
    let symbol_set = match (words.as_slice(), &d) {
        (["all"], _) => None,
        (["collision"], AnyDriver::Lorentz(_)) => None,
        (["symbol", k, a], AnyDriver::Symbolic(_)) => Some((
            k.parse::<i64>().map_err(|_| set_entry.invalid("bad coordinate"))?,
            a.parse::<usize>().map_err(|_| set_entry.invalid("bad symbol"))?,
        )),
        _ => {
            return Err(set_entry
                .invalid("expected 'all', 'collision' (lorentz) or 'symbol K A' (symbolic)")
                .into())
        }
    };
    if let (Some((k, _)), AnyDriver::Symbolic(s)) = (symbol_set, &d) {
        let obs = s.inner().observables();
        let (lo, hi) = (obs.iter().map(|f| f.lo()).min().unwrap().min(0), obs.iter().map(|f| f.hi()).max().unwrap().max(0));
        if k < lo || k > hi {
            return Err(set_entry.invalid(format!("coordinate must lie in the tracked range [{lo}, {hi}]")).into());
        }
    }
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let all = words == ["all"];
    let r = match &d {
        AnyDriver::Symbolic(s) => {
            let inner = s.inner();
            return_time_tail(
                s,
                |st| match symbol_set {
                    Some((k, a)) => inner.coordinate(st, k) == a,
                    None => true,
                },
                n_max,
                trajectory,
                ctx.seed,
            )
        }
        AnyDriver::Lorentz(g) => {
            return_time_tail(g, |st| all || LorentzDriver::collided(st), n_max, trajectory, ctx.seed)
        }
    }
    .map_err(experiment_err)?;
    let mut t = CsvTable::new(&["n", "survival"]);
    for (n, s) in r.survival.iter().enumerate() {
        t.push(csv_row![n, *s]);
    }
    out.table("return_tail.csv", t);
    let mut h = CsvTable::new(&["visits", "probability"]);
    for (c, p) in r.h_distribution.iter().enumerate() {
        h.push(csv_row![c, *p]);
    }
    out.table("visit_counts.csv", h);
    out.note("visit_fraction", fmt_f64(r.visit_fraction));
    out.note("returns", r.returns);
    out.note("max_return", r.max_return);
    Ok(out)
}

fn sample_table(samples: &[Vec<f64>]) -> CsvTable {
    let d = samples.first().map_or(0, Vec::len);
    let mut header = vec!["member".to_string()];
    header.extend((0..d).map(|i| format!("x{i}")));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = CsvTable::new(&refs);
    for (i, s) in samples.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(s.iter().map(|v| fmt_f64(*v)));
        t.push(row);
    }
    t
}

fn describe_samples(out: &mut Output, samples: &[Vec<f64>]) {
    let d = samples.first().map_or(0, Vec::len);
    for i in 0..d {
        let v: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        out.note(&format!("mean_x{i}"), fmt_f64(mean(&v)));
    }
    if samples.len() > 1 {
        let c = covariance(samples);
        for (i, row) in c.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out.note(&format!("cov_x{i}_x{j}"), fmt_f64(*v));
            }
        }
    }
}

fn fastslow(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    let d = driver(ctx)?;
    cfg.ensure_only("fastslow", &["d", "k", "a", "b", "epsilon", "xi", "members"])?;
    let (a, b) = setup::coefficients(cfg, "fastslow")?;
    let spec = FastSlowSpec {
        a,
        b,
        epsilon: cfg.value("fastslow", "epsilon")?,
        xi: cfg.require("fastslow", "xi")?.parse_list()?,
        ensemble: cfg.value("fastslow", "members")?,
        seed: ctx.seed,
    };
    spec.validate().map_err(|e| cfg.require("fastslow", "b").unwrap().invalid(e.to_string()))?;
    if dim(&d) != spec.k() {
        return Err(cfg.require("fastslow", "k").unwrap().invalid("must equal the driver's observable dimension").into());
    }
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let samples = with_driver!(&d, |x| simulate_fastslow(&spec, x)).map_err(experiment_err)?;
    out.table("fastslow.csv", sample_table(&samples));
    out.note("slow_steps", spec.slow_steps());
    describe_samples(&mut out, &samples);
    Ok(out)
}

/// `sigma` / `e` keys: `exact` (symbolic driver), `zero`, or a row-major list.
fn matrix_setting(ctx: &Ctx, key: &str, k: usize, exact: &dyn Fn() -> RunResult<(DMatrix<f64>, DMatrix<f64>)>) -> RunResult<DMatrix<f64>> {
    let entry = ctx.cfg.require("sde", key)?;
    match entry.value.as_str() {
        "exact" => {
            if ctx.dry_run {
                return Ok(DMatrix::identity(k, k));
            }
            let (sigma, e) = exact().map_err(|err| match err {
                RunError::Config(c) => RunError::Config(entry.invalid(c.to_string())),
                other => other,
            })?;
            let m = if key == "sigma" { sigma } else { e };
            if m.nrows() != k {
                return Err(entry.invalid(format!("driver has dimension {}, expected {k}", m.nrows())).into());
            }
            Ok(m)
        }
        "zero" => Ok(DMatrix::zeros(k, k)),
        _ => setup::matrix(entry, k),
    }
}

fn sde(ctx: &Ctx) -> RunResult<Output> {
    let cfg = &ctx.cfg;
    cfg.ensure_only("sde", &["d", "k", "a", "b", "xi", "members", "steps", "sigma", "e"])?;
    let (a, b) = setup::coefficients(cfg, "sde")?;
    let k = b.cols();
    let needs_driver = ["sigma", "e"].iter().any(|key| cfg.get("sde", key).is_some_and(|e| e.value == "exact"));
    let d = if needs_driver { Some(driver(ctx)?) } else { None };
    let exact = || -> RunResult<(DMatrix<f64>, DMatrix<f64>)> {
        d.as_ref()
            .and_then(AnyDriver::exact_correlations)
            .ok_or_else(|| RunError::Experiment("exact correlations need the symbolic driver".into()))
    };
    let sigma = matrix_setting(ctx, "sigma", k, &exact)?;
    let e = match cfg.get("sde", "e") {
        Some(_) => matrix_setting(ctx, "e", k, &exact)?,
        None => DMatrix::zeros(k, k),
    };
    let drift = drift_correction(a, b, &e).map_err(|err| cfg.require("sde", "b").unwrap().invalid(err.to_string()))?;
    let spec = SdeSpec {
        drift,
        sigma,
        xi: cfg.require("sde", "xi")?.parse_list()?,
        steps: cfg.value_or("sde", "steps", 1000usize)?,
        ensemble: cfg.value("sde", "members")?,
        seed: ctx.seed,
    };
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let samples = euler_maruyama(&spec).map_err(experiment_err)?;
    out.table("sde.csv", sample_table(&samples));
    out.note("drift_corrected", e.iter().any(|v| *v != 0.0));
    describe_samples(&mut out, &samples);
    Ok(out)
}

fn read_samples(ctx: &Ctx, key: &str) -> RunResult<Vec<Vec<f64>>> {
    let entry = ctx.cfg.require("compare", key)?;
    let path = ctx.base.join(&entry.value);
    if ctx.dry_run && !path.exists() {
        return Err(entry.invalid(format!("{} does not exist", path.display())).into());
    }
    if ctx.dry_run {
        return Ok(Vec::new());
    }
    let (header, rows) = read_numeric_csv(&path).map_err(|e| entry.invalid(format!("{}: {e}", path.display())))?;
    let skip = usize::from(header.first().is_some_and(|h| h == "member"));
    Ok(rows.into_iter().map(|r| r[skip..].to_vec()).collect())
}

fn compare(ctx: &Ctx) -> RunResult<Output> {
    ctx.cfg.ensure_only("compare", &["a", "b"])?;
    let a = read_samples(ctx, "a")?;
    let b = read_samples(ctx, "b")?;
    let mut out = Output::default();
    if ctx.dry_run {
        return Ok(out);
    }
    let (ks, energy) = compare_distributions(&a, &b).map_err(experiment_err)?;
    let mut t = CsvTable::new(&["coordinate", "ks_two_sample"]);
    for (i, v) in ks.iter().enumerate() {
        t.push(csv_row![format!("x{i}"), *v]);
    }
    out.table("compare.csv", t);
    out.note("energy_distance", fmt_f64(energy));
    out.note("samples_a", a.len());
    out.note("samples_b", b.len());
    Ok(out)
}
