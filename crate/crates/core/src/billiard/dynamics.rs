//! Event-driven flow, time-one map and collision map.
//!
//! Ray casting walks the unit cells crossed by the ray (grid traversal) and
//! tests, in each cell, every scatterer image centered in that cell or one of
//! its eight neighbours. Radii are below one half, so any image touching a
//! point of the ray is centered within one cell of it and the search is
//! complete; the walk stops once the best hit lies inside an already visited
//! cell or the cap is exceeded.

use super::{
    wrap_angle, BilliardError, CollisionCoord, FlowPoint, ScattererTable, Vec2, EVENT_TIE_TOL,
    GRAZING_TOL,
};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hit {
    pub t: f64,
    pub scatterer: usize,
    /// Center of the hit image in unfolded coordinates.
    pub center: Vec2,
}

/// A collision event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collision {
    /// Post-collision boundary coordinates.
    pub coord: CollisionCoord,
    /// Time elapsed since the start of the query.
    pub time: f64,
    /// Collision point reduced to the unit cell.
    pub position: Vec2,
    /// Post-collision velocity.
    pub velocity: Vec2,
    /// Curvature of the scatterer hit.
    pub curvature: f64,
}

impl Collision {
    pub fn cos_phi(&self) -> f64 {
        self.coord.phi.cos()
    }
}

/// End point of a flow together with the collisions met on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub end: FlowPoint,
    pub collisions: Vec<Collision>,
}

/// Earliest entry time of the ray `origin + t dir` into the disk, if any.
///
/// Uses the cancellation-free root `c / (-b + sqrt(b^2 - c))`; rays moving
/// away from the center and grazing rays are rejected.
#[inline]
fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let w = origin - center;
    let b = w.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let c = w.norm2() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let root = disc.sqrt();
    // |v.n| at impact equals root / radius
    if root < GRAZING_TOL * radius {
        return None;
    }
    let t = c / (root - b);
    (t > 0.0).then_some(t)
}

pub(crate) fn cast(table: &ScattererTable, origin: Vec2, dir: Vec2, max_t: f64) -> Option<Hit> {
    let mut cell_x = origin.x.floor() as i64;
    let mut cell_y = origin.y.floor() as i64;
    let (step_x, delta_x, mut next_x) = axis_setup(origin.x, dir.x, cell_x);
    let (step_y, delta_y, mut next_y) = axis_setup(origin.y, dir.y, cell_y);

    let mut best: Option<Hit> = None;
    loop {
        for (index, s) in table.scatterers().iter().enumerate() {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let center = s.center + Vec2::new((cell_x + dx) as f64, (cell_y + dy) as f64);
                    let Some(t) = ray_circle(origin, dir, center, s.radius) else {
                        continue;
                    };
                    if t > max_t {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some(b) => {
                            t < b.t - EVENT_TIE_TOL
                                || ((t - b.t).abs() <= EVENT_TIE_TOL && index < b.scatterer)
                        }
                    };
                    if better {
                        best = Some(Hit { t, scatterer: index, center });
                    }
                }
            }
        }
        let exit = next_x.min(next_y);
        if best.is_some_and(|b| b.t <= exit) || exit > max_t {
            return best;
        }
        if next_x < next_y {
            cell_x += step_x;
            next_x += delta_x;
        } else {
            cell_y += step_y;
            next_y += delta_y;
        }
    }
}

fn axis_setup(origin: f64, dir: f64, cell: i64) -> (i64, f64, f64) {
    if dir > 0.0 {
        (1, 1.0 / dir, (cell as f64 + 1.0 - origin) / dir)
    } else if dir < 0.0 {
        (-1, -1.0 / dir, (origin - cell as f64) / -dir)
    } else {
        (0, f64::INFINITY, f64::INFINITY)
    }
}

#[inline]
fn reflect_unchecked(v: Vec2, n: Vec2) -> Vec2 {
    v - n * (2.0 * v.dot(n))
}

/// Specular reflection `v - 2 (v.n) n` of an incoming unit velocity.
pub fn reflect(v: Vec2, n: Vec2) -> Result<Vec2, BilliardError> {
    let dot = v.dot(n);
    if dot >= 0.0 {
        return Err(BilliardError::NotIncoming { dot });
    }
    Ok(reflect_unchecked(v, n))
}

/// Resolves a hit into a collision event, reflecting the velocity.
fn resolve(table: &ScattererTable, origin: Vec2, dir: Vec2, hit: Hit, elapsed: f64) -> Collision {
    let radius = table.scatterers()[hit.scatterer].radius;
    let raw = origin + dir * hit.t;
    let normal = (raw - hit.center).normalized();
    let point = hit.center + normal * radius;
    let velocity = reflect_unchecked(dir, normal).normalized();
    Collision {
        coord: CollisionCoord::from_normal(table, hit.scatterer, normal, velocity),
        time: elapsed + hit.t,
        position: point.wrap_unit(),
        velocity,
        curvature: 1.0 / radius,
    }
}

/// First collision of the forward orbit of `p` within time `cap`.
pub fn next_collision(
    table: &ScattererTable,
    p: &FlowPoint,
    cap: f64,
) -> Result<Option<Collision>, BilliardError> {
    if !(cap > 0.0) {
        return Err(BilliardError::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    p.validate(table)?;
    let dir = p.velocity();
    Ok(cast(table, p.q, dir, cap).map(|hit| resolve(table, p.q, dir, hit, 0.0)))
}

fn advance(
    table: &ScattererTable,
    p: &FlowPoint,
    t: f64,
    mut on_collision: impl FnMut(&Collision),
) -> Result<FlowPoint, BilliardError> {
    if !(t >= 0.0) {
        return Err(BilliardError::InvalidArgument(format!("flow time must be >= 0, got {t}")));
    }
    p.validate(table)?;
    let mut pos = p.q;
    let mut dir = p.velocity();
    let mut elapsed = 0.0;
    let mut collided = false;
    loop {
        let remaining = t - elapsed;
        match cast(table, pos, dir, remaining) {
            Some(hit) => {
                let c = resolve(table, pos, dir, hit, elapsed);
                elapsed = c.time;
                pos = c.position;
                dir = c.velocity;
                collided = true;
                on_collision(&c);
            }
            None => {
                pos = (pos + dir * remaining).wrap_unit();
                break;
            }
        }
    }
    let theta = if collided { wrap_angle(dir.y.atan2(dir.x)) } else { p.theta };
    Ok(FlowPoint { q: pos, theta })
}

/// The billiard flow `Phi_t(p)`.
pub fn flow(table: &ScattererTable, p: &FlowPoint, t: f64) -> Result<FlowPoint, BilliardError> {
    advance(table, p, t, |_| {})
}

/// Like [`flow`], also recording every collision (times measured from `p`).
pub fn flow_traced(table: &ScattererTable, p: &FlowPoint, t: f64) -> Result<FlowTrace, BilliardError> {
    let mut collisions = Vec::new();
    let end = advance(table, p, t, |c| collisions.push(*c))?;
    Ok(FlowTrace { end, collisions })
}

/// The time-one map `T`.
pub fn time_one(table: &ScattererTable, p: &FlowPoint) -> Result<FlowPoint, BilliardError> {
    flow(table, p, 1.0)
}

/// The time-one map together with the number of collisions it crossed.
pub fn time_one_counted(table: &ScattererTable, p: &FlowPoint) -> Result<(FlowPoint, usize), BilliardError> {
    let mut count = 0;
    let end = advance(table, p, 1.0, |_| count += 1)?;
    Ok((end, count))
}

/// Velocity reversal `(q, theta) -> (q, theta + pi)`.
pub fn time_reversal(p: &FlowPoint) -> FlowPoint {
    FlowPoint { q: p.q, theta: wrap_angle(p.theta + std::f64::consts::PI) }
}

/// The collision map `F`; returns the next collision and the flight time.
pub fn billiard_map(
    table: &ScattererTable,
    c: &CollisionCoord,
) -> Result<(CollisionCoord, f64), BilliardError> {
    c.validate(table)?;
    let (point, normal) = c.boundary_point(table);
    let dir = normal.rotate(c.phi);
    let origin = point.wrap_unit();
    match cast(table, origin, dir, table.cap()) {
        Some(hit) => {
            let next = resolve(table, origin, dir, hit, 0.0);
            Ok((next.coord, next.time))
        }
        None => Err(BilliardError::HorizonCapExceeded { cap: table.cap() }),
    }
}

/// `F^{-1}` through time reversal: negate phi, apply `F`, negate phi.
pub fn billiard_map_inverse(
    table: &ScattererTable,
    c: &CollisionCoord,
) -> Result<(CollisionCoord, f64), BilliardError> {
    let flipped = CollisionCoord { phi: -c.phi, ..*c };
    let (next, time) = billiard_map(table, &flipped)?;
    Ok((CollisionCoord { phi: -next.phi, ..next }, time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billiard::{angle_diff, sample_phase_point};
    use crate::rng::member_rng;
    use rand::Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

    fn single(r: f64) -> ScattererTable {
        ScattererTable::from_disks(&[(0.0, 0.0, r)], 50.0).unwrap()
    }

    /// Brute force: every periodic image in a (2 ceil(cap) + 1)^2 block.
    fn brute_force(table: &ScattererTable, p: &FlowPoint, cap: f64) -> Option<(usize, f64)> {
        let k = cap.ceil() as i64 + 1;
        let dir = p.velocity();
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in table.scatterers().iter().enumerate() {
            for dx in -k..=k {
                for dy in -k..=k {
                    let c = s.center + Vec2::new(dx as f64, dy as f64);
                    // plain quadratic formula, independent of ray_circle
                    let w = p.q - c;
                    let b = 2.0 * w.dot(dir);
                    let cc = w.dot(w) - s.radius * s.radius;
                    let disc = b * b - 4.0 * cc;
                    if disc <= 0.0 {
                        continue;
                    }
                    let t = (-b - disc.sqrt()) / 2.0;
                    if t > 1e-12 && t <= cap && best.is_none_or(|(_, bt)| t < bt) {
                        best = Some((i, t));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn head_on_collision() {
        let t = single(0.25);
        let p = FlowPoint::new(0.4, 0.0, PI);
        let c = next_collision(&t, &p, 2.0).unwrap().unwrap();
        assert!((c.time - 0.15).abs() < 1e-14);
        assert!((c.position.x - 0.25).abs() < 1e-14 && c.position.y.abs() < 1e-14);
        assert!(c.coord.phi.abs() < 1e-14);
        assert!((c.velocity.x - 1.0).abs() < 1e-14);
    }

    #[test]
    fn corridor_ray_misses_everything() {
        let t = single(0.25);
        let p = FlowPoint::new(0.0, 0.5, 0.0);
        assert!(next_collision(&t, &p, 2.0).unwrap().is_none());
        // aimed just past the top of the disk image at x = 1
        let p = FlowPoint::new(0.5, 0.26, 0.0);
        assert!(next_collision(&t, &p, 2.0).unwrap().is_none());
    }

    #[test]
    fn point_inside_is_an_error() {
        let t = single(0.25);
        let p = FlowPoint::new(0.1, 0.0, 0.0);
        assert_eq!(
            next_collision(&t, &p, 1.0),
            Err(BilliardError::PointInsideScatterer { index: 0 })
        );
    }

    #[test]
    fn matches_image_enumeration_oracle() {
        let table = ScattererTable::reference();
        let mut rng = member_rng(11, 0);
        for _ in 0..2000 {
            let p = sample_phase_point(&table, &mut rng);
            let cap = 2.0;
            let got = next_collision(&table, &p, cap).unwrap();
            let want = brute_force(&table, &p, cap);
            match (got, want) {
                (Some(c), Some((i, t))) => {
                    assert_eq!(c.coord.scatterer_index, i);
                    assert!((c.time - t).abs() < 1e-10, "{} vs {}", c.time, t);
                }
                (None, None) => {}
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn matches_oracle_on_long_flights() {
        let table = ScattererTable::from_disks(&[(0.0, 0.0, 0.1), (0.5, 0.3, 0.05)], 50.0).unwrap();
        let mut rng = member_rng(12, 0);
        for _ in 0..300 {
            let p = sample_phase_point(&table, &mut rng);
            let got = next_collision(&table, &p, 6.0).unwrap();
            let want = brute_force(&table, &p, 6.0);
            assert_eq!(got.map(|c| c.coord.scatterer_index), want.map(|w| w.0));
            if let (Some(c), Some((_, t))) = (got, want) {
                assert!((c.time - t).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reflect_examples() {
        let out = reflect(Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(out, Vec2::new(1.0, 0.0));
        let h = 0.5f64.sqrt();
        let out = reflect(Vec2::new(-1.0, 0.0), Vec2::new(h, h)).unwrap();
        assert!(out.x.abs() < 1e-15 && (out.y - 1.0).abs() < 1e-15);
        assert!(matches!(
            reflect(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0)),
            Err(BilliardError::NotIncoming { .. })
        ));
    }

    #[test]
    fn reflect_preserves_norm_and_flips_normal_component() {
        let mut rng = member_rng(5, 0);
        for _ in 0..1000 {
            let n = Vec2::new(1.0, 0.0).rotate(rng.random::<f64>() * TAU);
            let v = (-n).rotate((rng.random::<f64>() - 0.5) * PI * 0.999);
            let out = reflect(v, n).unwrap();
            assert!((out.norm() - 1.0).abs() < 1e-14);
            assert!((out.dot(n) + v.dot(n)).abs() < 1e-14);
        }
    }

    #[test]
    fn free_flight_and_identity() {
        let t = single(0.1);
        let p = FlowPoint::new(0.5, 0.5, FRAC_PI_2);
        let q = flow(&t, &p, 0.3).unwrap();
        assert!((q.q.y - 0.8).abs() < 1e-15 && (q.q.x - 0.5).abs() < 1e-15);
        assert_eq!(q.theta, p.theta);
        let q = flow(&t, &p, 0.7).unwrap();
        assert!((q.q.y - 0.2).abs() < 1e-15);
        assert_eq!(flow(&t, &p, 0.0).unwrap(), p);
    }

    #[test]
    fn flow_composition() {
        let table = ScattererTable::reference();
        let mut rng = member_rng(3, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = sample_phase_point(&table, &mut rng);
            let a = flow(&table, &flow(&table, &p, 0.7).unwrap(), 0.3).unwrap();
            let b = time_one(&table, &p).unwrap();
            worst = worst.max(a.torus_distance(&b));
        }
        assert!(worst <= 1e-9, "worst composition error {worst}");
    }

    #[test]
    fn speed_is_conserved() {
        let table = ScattererTable::reference();
        let p = FlowPoint::new(0.45, 0.1, 0.3);
        let trace = flow_traced(&table, &p, 200.0).unwrap();
        assert!(trace.collisions.len() > 200);
        for c in &trace.collisions {
            assert!((c.velocity.norm() - 1.0).abs() < 1e-12);
            assert!(c.cos_phi() > 0.0);
        }
    }

    #[test]
    fn time_reversal_inverts_flow() {
        // rounding errors grow like e^{4.6 t} on the reference table, so
        // 1e-8 is only reachable for short times in double precision
        let table = ScattererTable::reference();
        let mut rng = member_rng(4, 0);
        for &t in &[0.5, 1.0, 2.0] {
            for _ in 0..200 {
                let p = sample_phase_point(&table, &mut rng);
                let q = flow(&table, &p, t).unwrap();
                let back = time_reversal(&flow(&table, &time_reversal(&q), t).unwrap());
                assert!(back.torus_distance(&p) < 1e-8);
            }
        }
    }

    #[test]
    fn period_two_orbit() {
        let table = ScattererTable::from_disks(&[(0.0, 0.0, 0.25), (0.5, 0.5, 0.25)], 50.0).unwrap();
        // point of disk 0 facing the center disk: angle pi/4, clockwise arclength 2pi r - r pi/4
        let r = 0.25 * (TAU - FRAC_PI_4);
        let c = CollisionCoord { scatterer_index: 0, r, phi: 0.0 };
        let (c1, t1) = billiard_map(&table, &c).unwrap();
        assert_eq!(c1.scatterer_index, 1);
        assert!((t1 - (0.5f64.sqrt() - 0.5)).abs() < 1e-14);
        let (c2, _) = billiard_map(&table, &c1).unwrap();
        assert_eq!(c2.scatterer_index, 0);
        assert!((c2.r - c.r).abs() < 1e-12 && c2.phi.abs() < 1e-12);
    }

    #[test]
    fn inverse_map_round_trip() {
        let table = ScattererTable::reference();
        let mut rng = member_rng(6, 0);
        for _ in 0..1000 {
            let i = rng.random_range(0..2);
            let radius = table.scatterers()[i].radius;
            let c = CollisionCoord {
                scatterer_index: i,
                r: rng.random::<f64>() * TAU * radius,
                phi: (rng.random::<f64>() - 0.5) * 2.8,
            };
            let (f, _) = billiard_map(&table, &c).unwrap();
            let (back, _) = billiard_map_inverse(&table, &f).unwrap();
            assert_eq!(back.scatterer_index, c.scatterer_index);
            let dr = angle_diff(back.r / radius, c.r / radius) * radius;
            assert!(dr.abs() < 1e-9 && (back.phi - c.phi).abs() < 1e-9, "{c:?} -> {back:?}");
        }
    }

    #[test]
    fn infinite_horizon_map_reports_cap() {
        let table = single(0.25).with_cap(3.0);
        // leave the disk horizontally from its top point: moves along y = 0.25 tangent line... use phi
        let c = CollisionCoord { scatterer_index: 0, r: 0.25 * 3.0 * FRAC_PI_2, phi: -FRAC_PI_2 + 1e-3 };
        let res = billiard_map(&table, &c);
        assert!(matches!(res, Err(BilliardError::HorizonCapExceeded { .. })), "{res:?}");
    }
}
