//! Finite-horizon planar periodic Lorentz gas.
//!
//! The configuration space is the unit torus with a finite set of disjoint
//! circular scatterers removed. A phase point is a position together with a
//! direction angle; the particle moves at unit speed and reflects
//! specularly on scatterer boundaries.
//!
//! Coordinates on the collision space use the clockwise arclength `r` along
//! the scatterer boundary (measured from the point at angle zero, the
//! rightmost point of the disk) and the signed angle `phi` from the outward
//! normal of the scatterer (the normal pointing into the free region) to the
//! post-collision velocity, counterclockwise positive.

mod diagnostics;
mod dynamics;
mod geometry;

pub use diagnostics::{
    contraction_sample, estimate_horizon, hyperbolicity_constant, invariance_check, perturbation_rate,
    q_marginal_cdf, sample_collision_measure, sample_phase_point,
    search_finite_horizon, stable_contraction_diagnostic, ContractionEstimate,
    HorizonReport, InvarianceRow, Perturbation,
};
pub use dynamics::{
    billiard_map, billiard_map_inverse, flow, flow_traced, next_collision, reflect,
    time_one, time_one_counted, time_reversal, Collision, FlowTrace,
};
pub use geometry::Vec2;

use std::f64::consts::TAU;
use thiserror::Error;

/// Collisions whose normal velocity component is below this are ignored.
pub const GRAZING_TOL: f64 = 1e-10;
/// Collision events closer than this are ordered by scatterer index.
pub const EVENT_TIE_TOL: f64 = 1e-12;
/// Allowed penetration of a phase point into a scatterer.
pub const INSIDE_TOL: f64 = 1e-9;
/// Default free-flight cap used when a table does not declare one.
pub const DEFAULT_CAP: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BilliardError {
    #[error("scatterer {index} has non-positive or too large radius {radius}")]
    BadRadius { index: usize, radius: f64 },
    #[error("scatterers {a} and {b} overlap (gap {gap})")]
    Overlapping { a: usize, b: usize, gap: f64 },
    #[error("table has no scatterers")]
    EmptyTable,
    #[error("phase point lies inside scatterer {index}")]
    PointInsideScatterer { index: usize },
    #[error("velocity is not incoming (v.n = {dot})")]
    NotIncoming { dot: f64 },
    #[error("no collision within flight cap {cap}")]
    HorizonCapExceeded { cap: f64 },
    #[error("collision coordinate out of range: {0}")]
    BadCollisionCoord(String),
    #[error("phase point is not on a scatterer boundary with outgoing velocity")]
    NotOnBoundary,
    #[error("collision-map derivative singular (cos phi = {cos_phi})")]
    DerivativeSingular { cos_phi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub center: Vec2,
    pub radius: f64,
}

/// A periodic billiard configuration plus derived geometric constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTable {
    scatterers: Vec<Scatterer>,
    cap: f64,
    tau_min_lower: f64,
    curvature_min: f64,
    perimeter_total: f64,
    arc_offsets: Vec<f64>,
}

impl ScattererTable {
    /// Builds a table; centers are reduced into `[0,1)^2`.
    ///
    /// Radii must lie in `(0, 1/2)` and the closures of all periodic images
    /// must be pairwise disjoint.
    pub fn new(scatterers: Vec<Scatterer>, cap: f64) -> Result<Self, BilliardError> {
        if scatterers.is_empty() {
            return Err(BilliardError::EmptyTable);
        }
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(BilliardError::InvalidArgument(format!("cap must be positive, got {cap}")));
        }
        let scatterers: Vec<Scatterer> = scatterers
            .into_iter()
            .map(|s| Scatterer { center: s.center.wrap_unit(), radius: s.radius })
            .collect();
        for (index, s) in scatterers.iter().enumerate() {
            if !(s.radius > 0.0 && s.radius < 0.5) {
                return Err(BilliardError::BadRadius { index, radius: s.radius });
            }
        }

        let mut tau_min_lower = f64::INFINITY;
        for (a, sa) in scatterers.iter().enumerate() {
            for (b, sb) in scatterers.iter().enumerate().skip(a) {
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        if a == b && dx == 0 && dy == 0 {
                            continue;
                        }
                        let shift = Vec2::new(dx as f64, dy as f64);
                        let gap = (sb.center + shift - sa.center).norm() - sa.radius - sb.radius;
                        if gap <= 0.0 {
                            return Err(BilliardError::Overlapping { a, b, gap });
                        }
                        tau_min_lower = tau_min_lower.min(gap);
                    }
                }
            }
        }

        let max_radius = scatterers.iter().map(|s| s.radius).fold(0.0, f64::max);
        let mut arc_offsets = Vec::with_capacity(scatterers.len());
        let mut perimeter_total = 0.0;
        for s in &scatterers {
            arc_offsets.push(perimeter_total);
            perimeter_total += TAU * s.radius;
        }

        Ok(Self {
            scatterers,
            cap,
            tau_min_lower,
            curvature_min: 1.0 / max_radius,
            perimeter_total,
            arc_offsets,
        })
    }

    /// Convenience constructor from `(x, y, radius)` triples.
    pub fn from_disks(disks: &[(f64, f64, f64)], cap: f64) -> Result<Self, BilliardError> {
        Self::new(
            disks
                .iter()
                .map(|&(x, y, radius)| Scatterer { center: Vec2::new(x, y), radius })
                .collect(),
            cap,
        )
    }

    /// The shipped finite-horizon reference table: a disk of radius 0.4 at
    /// the origin and a disk of radius 0.2 at the cell center.
    ///
    /// Found by [`search_finite_horizon`]; the same configuration is stored
    /// in `configs/finite_horizon.cfg`.
    pub fn reference() -> Self {
        Self::from_disks(&[(0.0, 0.0, 0.4), (0.5, 0.5, 0.2)], DEFAULT_CAP)
            .expect("reference table is valid")
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = cap;
        self
    }

    /// Minimal gap between scatterer boundaries over all periodic images.
    pub fn tau_min_lower(&self) -> f64 {
        self.tau_min_lower
    }

    /// Minimal curvature, `1 / max radius`.
    pub fn curvature_min(&self) -> f64 {
        self.curvature_min
    }

    pub fn perimeter_total(&self) -> f64 {
        self.perimeter_total
    }

    /// Area of the free region `Q` in the unit cell.
    pub fn free_area(&self) -> f64 {
        1.0 - self
            .scatterers
            .iter()
            .map(|s| std::f64::consts::PI * s.radius * s.radius)
            .sum::<f64>()
    }

    /// Position of `(scatterer, r)` along the concatenated boundary, in `[0,1)`.
    pub fn boundary_fraction(&self, c: &CollisionCoord) -> f64 {
        (self.arc_offsets[c.scatterer_index] + c.r) / self.perimeter_total
    }

    /// Inverse of [`boundary_fraction`](Self::boundary_fraction).
    pub fn locate_boundary(&self, fraction: f64) -> (usize, f64) {
        let s = fraction.rem_euclid(1.0) * self.perimeter_total;
        let idx = self.arc_offsets.iter().rposition(|&o| o <= s).unwrap_or(0);
        let perimeter = TAU * self.scatterers[idx].radius;
        (idx, (s - self.arc_offsets[idx]).clamp(0.0, perimeter * (1.0 - f64::EPSILON)))
    }

    /// Index of a scatterer image strictly containing `q` (beyond tolerance).
    pub(crate) fn containing_scatterer(&self, q: Vec2) -> Option<usize> {
        let q = q.wrap_unit();
        self.scatterers.iter().position(|s| {
            let d = (q - s.center).wrap_symmetric();
            d.norm() < s.radius - INSIDE_TOL
        })
    }
}

/// A phase point `(q, theta)` of the flow; speed is implicitly one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub q: Vec2,
    pub theta: f64,
}

impl FlowPoint {
    /// Builds a point with `q` wrapped into the unit cell and `theta` into `[0, 2pi)`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { q: Vec2::new(x, y).wrap_unit(), theta: wrap_angle(theta) }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn validate(&self, table: &ScattererTable) -> Result<(), BilliardError> {
        match table.containing_scatterer(self.q) {
            Some(index) => Err(BilliardError::PointInsideScatterer { index }),
            None => Ok(()),
        }
    }

    /// Distance on `T^2 x S^1` with the flat metric.
    pub fn torus_distance(&self, other: &FlowPoint) -> f64 {
        let dq = (self.q - other.q).wrap_symmetric();
        let dtheta = angle_diff(self.theta, other.theta);
        (dq.norm2() + dtheta * dtheta).sqrt()
    }
}

/// Boundary coordinates `(scatterer, r, phi)` of a post-collision state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionCoord {
    pub scatterer_index: usize,
    pub r: f64,
    pub phi: f64,
}

impl CollisionCoord {
    pub fn validate(&self, table: &ScattererTable) -> Result<(), BilliardError> {
        let s = table.scatterers.get(self.scatterer_index).ok_or_else(|| {
            BilliardError::BadCollisionCoord(format!("no scatterer {}", self.scatterer_index))
        })?;
        if !(0.0..TAU * s.radius).contains(&self.r) {
            return Err(BilliardError::BadCollisionCoord(format!("r = {} outside perimeter", self.r)));
        }
        if !(self.phi.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(BilliardError::BadCollisionCoord(format!("|phi| = {} >= pi/2", self.phi.abs())));
        }
        Ok(())
    }

    /// Boundary point (in the unit cell) and outward normal.
    pub fn boundary_point(&self, table: &ScattererTable) -> (Vec2, Vec2) {
        let s = table.scatterers[self.scatterer_index];
        let alpha = -self.r / s.radius;
        let normal = Vec2::new(alpha.cos(), alpha.sin());
        (s.center + normal * s.radius, normal)
    }

    /// The phase point sitting on the boundary with the post-collision velocity.
    pub fn to_flow_point(&self, table: &ScattererTable) -> FlowPoint {
        let (point, normal) = self.boundary_point(table);
        let v = normal.rotate(self.phi);
        FlowPoint { q: point.wrap_unit(), theta: wrap_angle(v.y.atan2(v.x)) }
    }

    /// Recovers boundary coordinates of a phase point lying on a scatterer
    /// boundary with outgoing velocity.
    pub fn from_flow_point(table: &ScattererTable, p: &FlowPoint) -> Result<Self, BilliardError> {
        let v = p.velocity();
        for (index, s) in table.scatterers.iter().enumerate() {
            let d = (p.q - s.center).wrap_symmetric();
            if (d.norm() - s.radius).abs() <= 1e-9 {
                let normal = d / d.norm();
                if normal.dot(v) <= 0.0 {
                    return Err(BilliardError::NotOnBoundary);
                }
                return Ok(Self::from_normal(table, index, normal, v));
            }
        }
        Err(BilliardError::NotOnBoundary)
    }

    pub(crate) fn from_normal(table: &ScattererTable, index: usize, normal: Vec2, v: Vec2) -> Self {
        let radius = table.scatterers[index].radius;
        let alpha = normal.y.atan2(normal.x);
        let perimeter = TAU * radius;
        let mut r = radius * (-alpha).rem_euclid(TAU);
        if r >= perimeter {
            r = 0.0;
        }
        let phi = normal.cross(v).atan2(normal.dot(v));
        Self { scatterer_index: index, r, phi }
    }
}

/// Reduces an angle into `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Signed difference `a - b` reduced into `[-pi, pi)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    (a - b + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_disk() -> ScattererTable {
        ScattererTable::from_disks(&[(0.0, 0.0, 0.25), (0.5, 0.5, 0.25)], 50.0).unwrap()
    }

    #[test]
    fn derived_constants_two_disk() {
        let t = two_disk();
        let expected = 0.5f64.sqrt() - 0.5;
        assert!((t.tau_min_lower() - expected).abs() < 1e-15);
        assert_eq!(t.curvature_min(), 4.0);
        assert!((t.perimeter_total() - PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_overlap_and_bad_radius() {
        assert!(matches!(
            ScattererTable::from_disks(&[(0.0, 0.0, 0.4), (0.5, 0.5, 0.4)], 50.0),
            Err(BilliardError::Overlapping { .. })
        ));
        assert!(matches!(
            ScattererTable::from_disks(&[(0.0, 0.0, 0.0)], 50.0),
            Err(BilliardError::BadRadius { .. })
        ));
        // a disk touching its own translate
        assert!(matches!(
            ScattererTable::from_disks(&[(0.0, 0.0, 0.5)], 50.0),
            Err(BilliardError::BadRadius { .. })
        ));
        assert!(matches!(ScattererTable::new(vec![], 50.0), Err(BilliardError::EmptyTable)));
    }

    #[test]
    fn self_translates_count_toward_gap() {
        let t = ScattererTable::from_disks(&[(0.3, 0.3, 0.45)], 50.0).unwrap();
        assert!((t.tau_min_lower() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn collision_coord_round_trip() {
        let t = two_disk();
        for &(i, r, phi) in &[(0usize, 0.1, 0.3), (1, 1.2, -1.2), (0, 0.0, 0.0), (1, 1.5, 1.5)] {
            let c = CollisionCoord { scatterer_index: i, r, phi };
            c.validate(&t).unwrap();
            let back = CollisionCoord::from_flow_point(&t, &c.to_flow_point(&t)).unwrap();
            assert_eq!(back.scatterer_index, i);
            assert!((back.r - r).abs() < 1e-12, "{back:?}");
            assert!((back.phi - phi).abs() < 1e-12, "{back:?}");
        }
    }

    #[test]
    fn clockwise_arclength() {
        let t = two_disk();
        // a quarter perimeter clockwise from angle 0 is the bottom point
        let c = CollisionCoord { scatterer_index: 1, r: 0.25 * PI / 2.0, phi: 0.0 };
        let (p, n) = c.boundary_point(&t);
        assert!((p.x - 0.5).abs() < 1e-12 && (p.y - 0.25).abs() < 1e-12);
        assert!((n.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_inside_is_detected() {
        let t = two_disk();
        assert!(FlowPoint::new(0.1, 0.05, 0.0).validate(&t).is_err());
        assert!(FlowPoint::new(0.95, 0.97, 0.0).validate(&t).is_err());
        assert!(FlowPoint::new(0.3, 0.0, 0.0).validate(&t).is_ok());
    }

    #[test]
    fn boundary_fraction_inverts() {
        let t = ScattererTable::reference();
        let c = CollisionCoord { scatterer_index: 1, r: 0.7, phi: 0.0 };
        let (i, r) = t.locate_boundary(t.boundary_fraction(&c));
        assert_eq!(i, 1);
        assert!((r - 0.7).abs() < 1e-12);
    }
}
