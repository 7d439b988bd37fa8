//! Horizon, hyperbolicity and contraction diagnostics, plus samplers for the
//! invariant measures.

use super::dynamics::{billiard_map, cast, flow_traced, next_collision, time_one, time_reversal};
use crate::stats::ks_one_sample;
use super::{BilliardError, CollisionCoord, FlowPoint, ScattererTable, Vec2};
use crate::rng::{member_rng, StreamRng};
use rand::Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Cosine of the collision angle below which the derivative is considered singular.
const SINGULAR_COS: f64 = 1e-6;
const HORIZON_CHUNK: usize = 1024;
const PROBE_MAX_INDEX: i64 = 4;
const PROBE_OFFSETS: usize = 64;

/// Uniform sample of the invariant volume on `Q x S^1`.
pub fn sample_phase_point(table: &ScattererTable, rng: &mut StreamRng) -> FlowPoint {
    loop {
        let q = Vec2::new(rng.random::<f64>(), rng.random::<f64>());
        let inside = table.scatterers().iter().any(|s| (q - s.center).wrap_symmetric().norm() <= s.radius);
        if !inside {
            return FlowPoint { q, theta: rng.random::<f64>() * TAU };
        }
    }
}

/// Sample of the collision-map invariant measure `cos(phi) dr dphi`.
pub fn sample_collision_measure(table: &ScattererTable, rng: &mut StreamRng) -> CollisionCoord {
    loop {
        let (scatterer_index, r) = table.locate_boundary(rng.random::<f64>());
        let phi = (2.0 * rng.random::<f64>() - 1.0).asin();
        if phi.abs() < FRAC_PI_2 {
            return CollisionCoord { scatterer_index, r, phi };
        }
    }
}

/// Exact distribution function of one position coordinate (`axis` 0 = x,
/// 1 = y) under the uniform measure on the free region, at `a` in `[0,1]`.
pub fn q_marginal_cdf(table: &ScattererTable, axis: usize, a: f64) -> f64 {
    let a = a.clamp(0.0, 1.0);
    let mut removed = 0.0;
    for s in table.scatterers() {
        let c = if axis == 0 { s.center.x } else { s.center.y };
        for k in -1..=1 {
            let ck = c + k as f64;
            removed += disk_area_left_of(a, ck, s.radius) - disk_area_left_of(0.0, ck, s.radius);
        }
    }
    ((a - removed) / table.free_area()).clamp(0.0, 1.0)
}

fn disk_area_left_of(a: f64, center: f64, radius: f64) -> f64 {
    let d = a - center;
    if d <= -radius {
        0.0
    } else if d >= radius {
        PI * radius * radius
    } else {
        radius * radius * (-d / radius).acos() + d * (radius * radius - d * d).sqrt()
    }
}

/// Free-flight statistics gathered by [`estimate_horizon`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonReport {
    /// Largest observed free flight; infinite when the cap was exceeded.
    pub tau_max_estimate: f64,
    /// Smallest observed collision-to-collision flight.
    pub tau_min_observed: f64,
    pub cap_exceeded: bool,
    /// Number of rays cast (random samples plus corridor probes).
    pub samples: usize,
}

#[derive(Clone, Copy)]
struct FlightStats {
    max: f64,
    min_between: f64,
    exceeded: bool,
    rays: usize,
}

impl FlightStats {
    fn empty() -> Self {
        Self { max: 0.0, min_between: f64::INFINITY, exceeded: false, rays: 0 }
    }

    fn merge(self, o: Self) -> Self {
        Self {
            max: self.max.max(o.max),
            min_between: self.min_between.min(o.min_between),
            exceeded: self.exceeded || o.exceeded,
            rays: self.rays + o.rays,
        }
    }
}

/// Samples free flights from uniform phase points and from corridor probes.
///
/// Each random sample contributes its first flight and the following
/// collision-to-collision flight. Probes shoot rays along every rational
/// direction `(a, b)` with `|a|, |b| <= 4` from evenly spaced offsets across
/// one lattice period, which finds every open corridor of those slopes.
pub fn estimate_horizon(table: &ScattererTable, n_samples: usize, cap: f64, seed: u64) -> HorizonReport {
    let chunks = n_samples.div_ceil(HORIZON_CHUNK);
    let random = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = member_rng(seed, chunk as u64);
            let count = HORIZON_CHUNK.min(n_samples - chunk * HORIZON_CHUNK);
            let mut stats = FlightStats::empty();
            for _ in 0..count {
                let p = sample_phase_point(table, &mut rng);
                stats = stats.merge(flights_from(table, &p, cap));
            }
            stats
        })
        .reduce(FlightStats::empty, FlightStats::merge);

    let probes = corridor_probes(table)
        .into_par_iter()
        .map(|p| {
            let mut stats = FlightStats { rays: 1, ..FlightStats::empty() };
            match cast(table, p.q, p.velocity(), cap) {
                Some(hit) => stats.max = hit.t,
                None => stats.exceeded = true,
            }
            stats
        })
        .reduce(FlightStats::empty, FlightStats::merge);

    let all = random.merge(probes);
    HorizonReport {
        tau_max_estimate: if all.exceeded { f64::INFINITY } else { all.max },
        tau_min_observed: all.min_between,
        cap_exceeded: all.exceeded,
        samples: all.rays,
    }
}

fn flights_from(table: &ScattererTable, p: &FlowPoint, cap: f64) -> FlightStats {
    let mut stats = FlightStats { rays: 1, ..FlightStats::empty() };
    let first = match next_collision(table, p, cap) {
        Ok(Some(c)) => c,
        _ => {
            stats.exceeded = true;
            return stats;
        }
    };
    stats.max = first.time;
    match cast(table, first.position, first.velocity, cap) {
        Some(hit) => {
            stats.max = stats.max.max(hit.t);
            stats.min_between = hit.t;
        }
        None => stats.exceeded = true,
    }
    stats
}

fn corridor_probes(table: &ScattererTable) -> Vec<FlowPoint> {
    let mut probes = Vec::new();
    for a in 0..=PROBE_MAX_INDEX {
        for b in -PROBE_MAX_INDEX..=PROBE_MAX_INDEX {
            if (a == 0 && b != 1) || gcd(a, b.abs()) != 1 {
                continue;
            }
            let dir = Vec2::new(a as f64, b as f64);
            let norm2 = dir.norm2();
            let theta = (b as f64).atan2(a as f64);
            for k in 0..PROBE_OFFSETS {
                let u = (k as f64 + 0.5) / PROBE_OFFSETS as f64;
                let q = (dir.perp() * (u / norm2)).wrap_unit();
                let p = FlowPoint { q, theta: super::wrap_angle(theta) };
                if table.containing_scatterer_closed(q).is_none() {
                    probes.push(p);
                }
            }
        }
    }
    probes
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl ScattererTable {
    fn containing_scatterer_closed(&self, q: Vec2) -> Option<usize> {
        self.scatterers()
            .iter()
            .position(|s| (q - s.center).wrap_symmetric().norm() <= s.radius)
    }
}

/// Runs [`estimate_horizon`] on each candidate and returns the first whose
/// flights all stay below `cap`.
pub fn search_finite_horizon(
    candidates: &[Vec<(f64, f64, f64)>],
    n_samples: usize,
    cap: f64,
    seed: u64,
) -> Option<(ScattererTable, HorizonReport)> {
    candidates.iter().find_map(|disks| {
        let table = ScattererTable::from_disks(disks, cap).ok()?;
        let report = estimate_horizon(&table, n_samples, cap, seed);
        (!report.cap_exceeded).then_some((table, report))
    })
}

/// `1 + 2 tau_min K_min`: the per-collision expansion factor of cone vectors.
pub fn hyperbolicity_constant(table: &ScattererTable) -> f64 {
    1.0 + 2.0 * table.tau_min_lower() * table.curvature_min()
}

/// Which direction to perturb a phase point along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    Stable,
    Unstable,
    Flow,
}

/// Empirical exponential rates of separation under `T`, per unit time.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionEstimate {
    pub stable_rate: f64,
    pub unstable_rate: f64,
    pub flow_rate: f64,
    /// Separations `|T^k p' - T^k p|` along the stable direction, `k = 0..=n_steps`.
    pub stable_separations: Vec<f64>,
}

type Mat2 = [[f64; 2]; 2];

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Derivative of the flow restricted to the plane transverse to the flow,
/// in Jacobi coordinates `(J, J')` (perpendicular displacement and angle
/// perturbation), along the orbit of `p` for time `horizon`. Free flight acts
/// as `[[1, s], [0, 1]]`, a collision as `[[1, 0], [2K / cos phi, 1]]` up to
/// an overall sign.
fn transverse_derivative(table: &ScattererTable, p: &FlowPoint, horizon: f64) -> Result<Mat2, BilliardError> {
    let trace = flow_traced(table, p, horizon)?;
    let mut m: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
    let mut last = 0.0;
    for c in &trace.collisions {
        let cos_phi = c.cos_phi();
        if cos_phi < SINGULAR_COS {
            return Err(BilliardError::DerivativeSingular { cos_phi });
        }
        let fly = [[1.0, c.time - last], [0.0, 1.0]];
        let hit = [[1.0, 0.0], [2.0 * c.curvature / cos_phi, 1.0]];
        m = mat_mul(&hit, &mat_mul(&fly, &m));
        last = c.time;
    }
    Ok(mat_mul(&[[1.0, horizon - last], [0.0, 1.0]], &m))
}

/// Most contracted direction of `m` by power iteration on `m^{-1} m^{-T}`.
fn most_contracted(m: &Mat2) -> [f64; 2] {
    // det m = 1
    let inv = [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]];
    let inv_t = [[inv[0][0], inv[1][0]], [inv[0][1], inv[1][1]]];
    let a = mat_mul(&inv, &inv_t);
    let mut u = [1.0, 0.6180339887498949];
    for _ in 0..16 {
        let w = [a[0][0] * u[0] + a[0][1] * u[1], a[1][0] * u[0] + a[1][1] * u[1]];
        let n = w[0].hypot(w[1]);
        u = [w[0] / n, w[1] / n];
    }
    u
}

fn perturbation_vector(
    table: &ScattererTable,
    p: &FlowPoint,
    kind: Perturbation,
    horizon: f64,
) -> Result<(Vec2, f64), BilliardError> {
    match kind {
        Perturbation::Flow => Ok((p.velocity(), 0.0)),
        Perturbation::Stable => {
            let u = most_contracted(&transverse_derivative(table, p, horizon)?);
            Ok((p.velocity().perp() * u[0], u[1]))
        }
        Perturbation::Unstable => {
            // the stable direction of the reversed point, as a physical displacement
            let reversed = time_reversal(p);
            let u = most_contracted(&transverse_derivative(table, &reversed, horizon)?);
            Ok((reversed.velocity().perp() * u[0], u[1]))
        }
    }
}

/// Least-squares exponential rate of the separation of `p` and its
/// perturbation along `kind`, sampled at `T^k`, `k = 0..=n_steps`.
pub fn perturbation_rate(
    table: &ScattererTable,
    p: &FlowPoint,
    kind: Perturbation,
    n_steps: usize,
    perturbation: f64,
) -> Result<(f64, Vec<f64>), BilliardError> {
    if n_steps == 0 {
        return Err(BilliardError::InvalidArgument("n_steps must be >= 1".into()));
    }
    if !(perturbation > 0.0 && perturbation <= 1e-6) {
        return Err(BilliardError::InvalidArgument(format!(
            "perturbation must lie in (0, 1e-6], got {perturbation}"
        )));
    }
    p.validate(table)?;
    let (dq, dtheta) = perturbation_vector(table, p, kind, n_steps as f64 + 6.0)?;
    let mut a = *p;
    let mut b = FlowPoint::new(p.q.x + perturbation * dq.x, p.q.y + perturbation * dq.y, p.theta + perturbation * dtheta);
    b.validate(table)?;
    let mut seps = vec![a.torus_distance(&b)];
    for _ in 0..n_steps {
        a = time_one(table, &a)?;
        b = time_one(table, &b)?;
        seps.push(a.torus_distance(&b));
    }
    let logs: Vec<f64> = seps.iter().map(|s| s.max(f64::MIN_POSITIVE).ln()).collect();
    Ok((slope(&logs), seps))
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Separation rates along the numerically found stable and unstable
/// directions and along the flow direction.
pub fn stable_contraction_diagnostic(
    table: &ScattererTable,
    p: &FlowPoint,
    n_steps: usize,
    perturbation: f64,
) -> Result<ContractionEstimate, BilliardError> {
    let (stable_rate, stable_separations) = perturbation_rate(table, p, Perturbation::Stable, n_steps, perturbation)?;
    let (unstable_rate, _) = perturbation_rate(table, p, Perturbation::Unstable, n_steps, perturbation)?;
    let (flow_rate, _) = perturbation_rate(table, p, Perturbation::Flow, n_steps, perturbation)?;
    Ok(ContractionEstimate { stable_rate, unstable_rate, flow_rate, stable_separations })
}

/// Runs the diagnostic at `n_points` uniform base points, resampling points
/// whose orbit has a near-tangential collision.
pub fn contraction_sample(
    table: &ScattererTable,
    n_points: usize,
    n_steps: usize,
    perturbation: f64,
    seed: u64,
) -> Result<Vec<ContractionEstimate>, BilliardError> {
    (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, i as u64);
            loop {
                let p = sample_phase_point(table, &mut rng);
                match stable_contraction_diagnostic(table, &p, n_steps, perturbation) {
                    Ok(est) => return Ok(est),
                    Err(BilliardError::DerivativeSingular { .. })
                    | Err(BilliardError::PointInsideScatterer { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect()
}

/// KS distance of one pushforward marginal from its invariant law.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceRow {
    /// `"time_one"` or `"collision_map"`.
    pub map: &'static str,
    pub coordinate: &'static str,
    pub ks: f64,
}

/// Pushes `n_samples` invariant samples through `T` (uniform on `Q x S^1`)
/// and through `F` (`cos(phi) dr dphi`) and compares every coordinate
/// marginal with its exact law: the free-region marginals for `x`, `y`,
/// uniform for `theta`, uniform boundary fraction, and `sin(phi)` uniform on
/// `[-1, 1]`.
pub fn invariance_check(table: &ScattererTable, n_samples: usize, seed: u64) -> Result<Vec<InvarianceRow>, BilliardError> {
    let flow_images = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, i);
            time_one(table, &sample_phase_point(table, &mut rng))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let map_images = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = member_rng(seed, n_samples as u64 + i);
            let c = sample_collision_measure(table, &mut rng);
            billiard_map(table, &c).map(|(next, _)| next)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let ks = |values: Vec<f64>, cdf: &dyn Fn(f64) -> f64| ks_one_sample(&values, cdf).expect("non-empty sample");
    let uniform = |lo: f64, hi: f64| move |v: f64| ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
    Ok(vec![
        InvarianceRow {
            map: "time_one",
            coordinate: "x",
            ks: ks(flow_images.iter().map(|p| p.q.x).collect(), &|a| q_marginal_cdf(table, 0, a)),
        },
        InvarianceRow {
            map: "time_one",
            coordinate: "y",
            ks: ks(flow_images.iter().map(|p| p.q.y).collect(), &|a| q_marginal_cdf(table, 1, a)),
        },
        InvarianceRow {
            map: "time_one",
            coordinate: "theta",
            ks: ks(flow_images.iter().map(|p| p.theta).collect(), &uniform(0.0, TAU)),
        },
        InvarianceRow {
            map: "collision_map",
            coordinate: "boundary_fraction",
            ks: ks(map_images.iter().map(|c| table.boundary_fraction(c)).collect(), &uniform(0.0, 1.0)),
        },
        InvarianceRow {
            map: "collision_map",
            coordinate: "sin_phi",
            ks: ks(map_images.iter().map(|c| c.phi.sin()).collect(), &uniform(-1.0, 1.0)),
        },
    ])
}
