use serde::{Deserialize, Serialize};

use super::moebius::{MoebiusMap, Point, C64, ONE, ZERO};
use crate::error::{LabError, Result};
use crate::tolerance::COMPARE_TOL;

/// Which model of the hyperbolic plane an object lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Disk,
    HalfPlane,
}

/// The Euclidean curve carrying a geodesic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Carrier {
    /// Straight line through `point` with unit `direction` (disk diameters,
    /// vertical half-plane geodesics).
    Line {
        point: C64,
        direction: C64,
    },
    Circle {
        center: C64,
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geodesic {
    model: Model,
    endpoints: (Point, Point),
    carrier: Carrier,
}

impl Geodesic {
    /// Geodesic with the given ideal endpoints. In the disk model the endpoints
    /// must lie on the unit circle; in the half-plane model they must be real or
    /// infinite.
    pub fn between(p: Point, q: Point, model: Model) -> Result<Self> {
        match model {
            Model::Disk => {
                let (p, q) = match (p, q) {
                    (Point::Finite(p), Point::Finite(q)) => (p, q),
                    _ => return Err(LabError::InvalidInput("disk geodesic endpoint at infinity".into())),
                };
                for e in [p, q] {
                    if (e.norm() - 1.0).abs() > 1e-9 {
                        return Err(LabError::InvalidInput(format!("{e} is not on the unit circle")));
                    }
                }
                let (p, q) = (p / p.norm(), q / q.norm());
                if (p - q).norm() <= COMPARE_TOL {
                    return Err(LabError::DegenerateGeodesic);
                }
                let carrier = if (p + q).norm() <= 1e-12 {
                    Carrier::Line {
                        point: ZERO,
                        direction: p,
                    }
                } else {
                    // tangent lines at p and q meet at the center: Re(c conj p) = Re(c conj q) = 1
                    let center = (p + q) / (1.0 + (p * q.conj()).re);
                    Carrier::Circle {
                        center,
                        radius: (center - p).norm(),
                    }
                };
                Ok(Self {
                    model,
                    endpoints: (Point::Finite(p), Point::Finite(q)),
                    carrier,
                })
            }
            Model::HalfPlane => {
                let real = |e: Point| -> Result<Option<f64>> {
                    match e {
                        Point::Infinity => Ok(None),
                        Point::Finite(z) if z.im.abs() <= 1e-9 * z.re.abs().max(1.0) => Ok(Some(z.re)),
                        Point::Finite(z) => Err(LabError::InvalidInput(format!("{z} is not on the real axis"))),
                    }
                };
                let carrier = match (real(p)?, real(q)?) {
                    (None, None) => return Err(LabError::DegenerateGeodesic),
                    (Some(x), None) | (None, Some(x)) => Carrier::Line {
                        point: C64::new(x, 0.0),
                        direction: C64::new(0.0, 1.0),
                    },
                    (Some(x), Some(y)) => {
                        if (x - y).abs() <= COMPARE_TOL * x.abs().max(1.0) {
                            return Err(LabError::DegenerateGeodesic);
                        }
                        Carrier::Circle {
                            center: C64::new(0.5 * (x + y), 0.0),
                            radius: 0.5 * (x - y).abs(),
                        }
                    }
                };
                Ok(Self {
                    model,
                    endpoints: (p, q),
                    carrier,
                })
            }
        }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn endpoints(&self) -> (Point, Point) {
        self.endpoints
    }

    pub fn carrier(&self) -> Carrier {
        self.carrier
    }

    /// True for disk diameters and vertical half-plane lines.
    pub fn is_straight(&self) -> bool {
        matches!(self.carrier, Carrier::Line { .. })
    }

    /// Antiholomorphic reflection across the carrying line or circle.
    pub fn reflection(&self) -> MoebiusMap {
        let m = match self.carrier {
            Carrier::Line { point, direction } => {
                let u2 = direction * direction / direction.norm_sqr();
                MoebiusMap::new(u2, point - u2 * point.conj(), ZERO, ONE, true)
            }
            Carrier::Circle { center, radius } => MoebiusMap::new(
                center,
                C64::new(radius * radius - center.norm_sqr(), 0.0),
                ONE,
                -center.conj(),
                true,
            ),
        };
        m.expect("reflection matrices are nonsingular")
    }

    /// Reflect a finite point across the geodesic.
    pub fn reflect(&self, z: C64) -> C64 {
        match self.carrier {
            Carrier::Line { point, direction } => {
                let u = direction / direction.norm();
                point + u * u * (z - point).conj()
            }
            Carrier::Circle { center, radius } => {
                let w = z - center;
                center + radius * radius / w.conj()
            }
        }
    }

    /// Signed side function: zero on the carrier, opposite signs on the two sides.
    /// For circles it is negative inside the carrying circle.
    pub fn side(&self, z: C64) -> f64 {
        match self.carrier {
            Carrier::Line { point, direction } => (direction.conj() * (z - point)).im,
            Carrier::Circle { center, radius } => (z - center).norm() - radius,
        }
    }

    /// `n - 1` points strictly inside the geodesic, evenly spaced in the carrier's
    /// natural parameter.
    pub fn sample(&self, n: usize) -> Vec<C64> {
        let n = n.max(2);
        let t = |k: usize| k as f64 / n as f64;
        match (self.carrier, self.endpoints) {
            (Carrier::Line { .. }, (Point::Finite(p), Point::Finite(q))) if self.model == Model::Disk => {
                (1..n).map(|k| p + (q - p) * t(k)).collect()
            }
            (Carrier::Line { point, .. }, _) => (1..n)
                .map(|k| point + C64::new(0.0, (-4.0 + 8.0 * t(k)).exp()))
                .collect(),
            (Carrier::Circle { center, radius }, (Point::Finite(p), Point::Finite(q))) => {
                let (a0, sweep) = interior_sweep(center, p, q, self.model);
                (1..n)
                    .map(|k| center + C64::from_polar(radius, a0 + sweep * t(k)))
                    .collect()
            }
            (Carrier::Circle { .. }, _) => Vec::new(),
        }
    }
}

/// Start angle and signed sweep of the arc of the circle (center) from p to q
/// that lies inside the model domain.
pub(crate) fn interior_sweep(center: C64, p: C64, q: C64, model: Model) -> (f64, f64) {
    let a0 = (p - center).arg();
    let a1 = (q - center).arg();
    let mut sweep = a1 - a0;
    while sweep > std::f64::consts::PI {
        sweep -= std::f64::consts::TAU;
    }
    while sweep < -std::f64::consts::PI {
        sweep += std::f64::consts::TAU;
    }
    let mid = center + C64::from_polar((p - center).norm(), a0 + 0.5 * sweep);
    let inside = match model {
        Model::Disk => mid.norm() < 1.0,
        Model::HalfPlane => mid.im > 0.0,
    };
    if !inside {
        sweep -= sweep.signum() * std::f64::consts::TAU;
    }
    (a0, sweep)
}

/// Convenience constructor in the disk model.
pub fn geodesic_between(p: C64, q: C64) -> Result<Geodesic> {
    Geodesic::between(Point::Finite(p), Point::Finite(q), Model::Disk)
}

pub fn reflect(g: &Geodesic, z: C64) -> C64 {
    g.reflect(z)
}

/// Hyperbolic distance in the unit disk (curvature -1): 2 artanh |z-w|/|1 - conj(w) z|.
pub fn hyperbolic_distance(z: C64, w: C64) -> Result<f64> {
    for p in [z, w] {
        if p.norm() >= 1.0 {
            return Err(LabError::IdealPoint(p));
        }
    }
    let t = (z - w).norm() / (ONE - w.conj() * z).norm();
    Ok(2.0 * t.min(1.0).atanh())
}

/// Hyperbolic distance in the upper half-plane.
pub fn hyperbolic_distance_half_plane(z: C64, w: C64) -> Result<f64> {
    for p in [z, w] {
        if p.im <= 0.0 {
            return Err(LabError::IdealPoint(p));
        }
    }
    Ok(2.0 * ((z - w).norm() / (2.0 * (z.im * w.im).sqrt())).asinh())
}

/// Geodesic equidistant from `z` and `g(z)` (disk model).
pub fn perpendicular_bisector(z: C64, g: &MoebiusMap) -> Result<Geodesic> {
    let w = g.apply_c(z);
    if (w - z).norm() <= COMPARE_TOL {
        return Err(LabError::FixedPoint(z));
    }
    bisector_of_points(z, w)
}

/// Geodesic equidistant from two distinct points of the disk.
pub fn bisector_of_points(z: C64, w: C64) -> Result<Geodesic> {
    let to_origin = MoebiusMap::disk_automorphism(-z)?;
    let back = MoebiusMap::disk_automorphism(z)?;
    let w0 = to_origin.apply_c(w);
    let dist = hyperbolic_distance(ZERO, w0)?;
    let u = w0 / w0.norm();
    let m = (0.25 * dist).tanh();
    let s = (1.0 + m * m) / (2.0 * m);
    let alpha = (1.0 / s).acos();
    let e1 = back.apply_c(u * C64::from_polar(1.0, alpha));
    let e2 = back.apply_c(u * C64::from_polar(1.0, -alpha));
    geodesic_between(e1 / e1.norm(), e2 / e2.norm())
}

/// Closed hyperbolic half-plane bounded by a geodesic, identified by a witness
/// point it contains.
#[derive(Clone, Copy, Debug)]
pub struct HalfPlaneRegion {
    geodesic: Geodesic,
    witness: C64,
}

impl HalfPlaneRegion {
    pub fn new(geodesic: Geodesic, witness: C64) -> Result<Self> {
        if geodesic.side(witness) == 0.0 {
            return Err(LabError::InvalidInput("witness lies on the boundary geodesic".into()));
        }
        Ok(Self { geodesic, witness })
    }

    pub fn geodesic(&self) -> &Geodesic {
        &self.geodesic
    }

    pub fn contains(&self, z: C64) -> bool {
        let s = self.geodesic.side(z);
        s == 0.0 || s.signum() == self.geodesic.side(self.witness).signum()
    }

    pub fn contains_with_tol(&self, z: C64, tol: f64) -> bool {
        self.geodesic.side(z) * self.geodesic.side(self.witness).signum() >= -tol
    }
}

/// |trace| of a holomorphic determinant-one map.
pub fn normalized_trace(m: &MoebiusMap) -> Result<f64> {
    m.normalized_trace()
}

/// Exact trace of the composition of reflections across the half-plane
/// geodesics over two real intervals of lengths `r_j`, `r_k` separated by a
/// gap of length `eps`.
pub fn reflection_pair_trace(r_j: f64, r_k: f64, eps: f64) -> f64 {
    2.0 + 4.0 * eps * (1.0 / r_j + 1.0 / r_k) + 4.0 * eps * eps / (r_j * r_k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CayleyDirection {
    DiskToHalfPlane,
    HalfPlaneToDisk,
}

impl CayleyDirection {
    fn map(self) -> MoebiusMap {
        match self {
            CayleyDirection::DiskToHalfPlane => MoebiusMap::cayley(),
            CayleyDirection::HalfPlaneToDisk => MoebiusMap::cayley().inverse(),
        }
    }
}

/// Conjugation by the fixed Cayley map `z -> i(1+z)/(1-z)`.
pub trait CayleyTransport: Sized {
    fn cayley_transport(&self, direction: CayleyDirection) -> Result<Self>;
}

impl CayleyTransport for Point {
    fn cayley_transport(&self, direction: CayleyDirection) -> Result<Self> {
        direction.map().apply(*self)
    }
}

impl CayleyTransport for MoebiusMap {
    fn cayley_transport(&self, direction: CayleyDirection) -> Result<Self> {
        let c = direction.map();
        Ok(c.compose(self).compose(&c.inverse()))
    }
}

impl CayleyTransport for Geodesic {
    fn cayley_transport(&self, direction: CayleyDirection) -> Result<Self> {
        let target = match direction {
            CayleyDirection::DiskToHalfPlane => Model::HalfPlane,
            CayleyDirection::HalfPlaneToDisk => Model::Disk,
        };
        if (self.model == Model::Disk) != (direction == CayleyDirection::DiskToHalfPlane) {
            return Err(LabError::InvalidInput("geodesic is not in the source model".into()));
        }
        let (p, q) = self.endpoints;
        let snap = |e: Point| match (e, target) {
            (Point::Finite(z), Model::HalfPlane) if z.norm() > 1e15 => Point::Infinity,
            (Point::Finite(z), Model::HalfPlane) => Point::Finite(C64::new(z.re, 0.0)),
            (e, _) => e,
        };
        Geodesic::between(
            snap(p.cayley_transport(direction)?),
            snap(q.cayley_transport(direction)?),
            target,
        )
    }
}
