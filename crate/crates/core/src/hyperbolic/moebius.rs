use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::tolerance::NORMALIZE_TOL;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// A point of the Riemann sphere. Infinity is an explicit tag, never a large float.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Point {
    Finite(C64),
    Infinity,
}

impl Point {
    pub fn finite(self) -> Option<C64> {
        match self {
            Point::Finite(z) => Some(z),
            Point::Infinity => None,
        }
    }

    pub fn conj(self) -> Self {
        match self {
            Point::Finite(z) => Point::Finite(z.conj()),
            Point::Infinity => Point::Infinity,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Point::Infinity)
    }

    /// Chordal-style closeness: two infinities agree, a finite point agrees with
    /// another finite point within `tol`.
    pub fn approx_eq(self, other: Point, tol: f64) -> bool {
        match (self, other) {
            (Point::Infinity, Point::Infinity) => true,
            (Point::Finite(a), Point::Finite(b)) => (a - b).norm() <= tol,
            _ => false,
        }
    }
}

impl From<C64> for Point {
    fn from(z: C64) -> Self {
        Point::Finite(z)
    }
}

impl From<f64> for Point {
    fn from(x: f64) -> Self {
        if x.is_infinite() {
            Point::Infinity
        } else {
            Point::Finite(C64::new(x, 0.0))
        }
    }
}

/// Linear fractional map `z -> (a z + b)/(c z + d)`, or its antiholomorphic
/// counterpart `z -> (a conj(z) + b)/(c conj(z) + d)`.
///
/// Entries are kept with determinant 1 and a canonical overall sign: the first
/// entry (in the order a, b, c, d) that is not numerically zero has positive real
/// part, or zero real part and positive imaginary part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoebiusMap {
    a: C64,
    b: C64,
    c: C64,
    d: C64,
    antiholomorphic: bool,
}

impl MoebiusMap {
    pub fn new(a: C64, b: C64, c: C64, d: C64, antiholomorphic: bool) -> Result<Self> {
        let det = a * d - b * c;
        if !(det.norm() > 0.0) || !det.is_finite() {
            return Err(LabError::InvalidInput(format!("singular Moebius matrix (det = {det})")));
        }
        Ok(Self::normalized(a, b, c, d, antiholomorphic))
    }

    fn normalized(a: C64, b: C64, c: C64, d: C64, antiholomorphic: bool) -> Self {
        Self::normalized_by(a, b, c, d, antiholomorphic, a * d - b * c)
    }

    /// Rescales by a determinant known from elsewhere.
    fn normalized_by(a: C64, b: C64, c: C64, d: C64, antiholomorphic: bool, det: C64) -> Self {
        let s = det.sqrt();
        let (mut a, mut b, mut c, mut d) = (a / s, b / s, c / s, d / s);
        let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
        let tol = NORMALIZE_TOL * scale.max(1.0);
        if let Some(lead) = [a, b, c, d].into_iter().find(|e| e.norm() > tol) {
            if lead.re < -tol || (lead.re.abs() <= tol && lead.im < 0.0) {
                a = -a;
                b = -b;
                c = -c;
                d = -d;
            }
        }
        Self {
            a,
            b,
            c,
            d,
            antiholomorphic,
        }
    }

    pub fn identity() -> Self {
        Self::normalized(ONE, ZERO, ZERO, ONE, false)
    }

    /// `z -> e^{i theta} z`.
    pub fn rotation(theta: f64) -> Self {
        let h = C64::from_polar(1.0, theta / 2.0);
        Self::normalized(h, ZERO, ZERO, h.conj(), false)
    }

    /// Disk automorphism `z -> (z + a)/(1 + conj(a) z)`, requires |a| < 1.
    pub fn disk_automorphism(a: C64) -> Result<Self> {
        if a.norm() >= 1.0 {
            return Err(LabError::InvalidInput(format!(
                "automorphism parameter {a} is not inside the unit disk"
            )));
        }
        Self::new(ONE, a, a.conj(), ONE, false)
    }

    /// Cayley map `z -> i(1+z)/(1-z)` sending the unit disk onto the upper half-plane.
    pub fn cayley() -> Self {
        Self::normalized(I, I, -ONE, ONE, false)
    }

    /// Complex conjugation `z -> conj(z)`.
    pub fn conjugation() -> Self {
        Self::normalized(ONE, ZERO, ZERO, ONE, true)
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn is_antiholomorphic(&self) -> bool {
        self.antiholomorphic
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|e| e.is_finite())
    }

    #[inline]
    fn input(&self, z: C64) -> C64 {
        if self.antiholomorphic {
            z.conj()
        } else {
            z
        }
    }

    /// Image of a point of the sphere.
    pub fn apply(&self, z: Point) -> Result<Point> {
        match z {
            Point::Infinity => {
                if self.c.norm() == 0.0 {
                    Ok(Point::Infinity)
                } else {
                    Ok(Point::Finite(self.a / self.c))
                }
            }
            Point::Finite(z) => {
                let w = self.input(z);
                let num = self.a * w + self.b;
                let den = self.c * w + self.d;
                if den.norm() == 0.0 {
                    if num.norm() == 0.0 {
                        Err(LabError::Unnormalized(z))
                    } else {
                        Ok(Point::Infinity)
                    }
                } else {
                    Ok(Point::Finite(num / den))
                }
            }
        }
    }

    /// Image of a finite point that is known not to be a pole (interior points of
    /// the disk under disk automorphisms). No pole check.
    #[inline]
    pub fn apply_c(&self, z: C64) -> C64 {
        let w = self.input(z);
        (self.a * w + self.b) / (self.c * w + self.d)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        let [a2, b2, c2, d2] = if self.antiholomorphic {
            [other.a.conj(), other.b.conj(), other.c.conj(), other.d.conj()]
        } else {
            other.entries()
        };
        let a = self.a * a2 + self.b * c2;
        let b = self.a * b2 + self.b * d2;
        let c = self.c * a2 + self.d * c2;
        let d = self.c * b2 + self.d * d2;
        // both factors have determinant one; recomputing it from large
        // entries would only inject cancellation error
        let out = Self::normalized_by(a, b, c, d, self.antiholomorphic ^ other.antiholomorphic, ONE);
        if !out.is_finite() {
            log::warn!("Moebius composition overflowed");
        }
        out
    }

    pub fn inverse(&self) -> MoebiusMap {
        let (a, b, c, d) = (self.d, -self.b, -self.c, self.a);
        if self.antiholomorphic {
            // m(z) = M(conj z)  =>  m^{-1}(w) = conj(M^{-1}(w)) = conj(M^{-1})(conj w)
            Self::normalized(a.conj(), b.conj(), c.conj(), d.conj(), true)
        } else {
            Self::normalized(a, b, c, d, false)
        }
    }

    /// Complex derivative of a holomorphic map.
    #[inline]
    pub fn derivative(&self, z: C64) -> C64 {
        let den = self.c * z + self.d;
        ONE / (den * den)
    }

    /// Second derivative of a holomorphic map.
    #[inline]
    pub fn second_derivative(&self, z: C64) -> C64 {
        let den = self.c * z + self.d;
        -2.0 * self.c / (den * den * den)
    }

    /// |m'(z)| = |det| / |c z + d|^2 (with conj(z) for antiholomorphic maps).
    pub fn derivative_modulus(&self, z: C64) -> Result<f64> {
        let den = self.c * self.input(z) + self.d;
        if den.norm() == 0.0 {
            return Err(LabError::Pole(z));
        }
        Ok(1.0 / den.norm_sqr())
    }

    #[inline]
    pub fn derivative_modulus_unchecked(&self, z: C64) -> f64 {
        1.0 / (self.c * self.input(z) + self.d).norm_sqr()
    }

    /// |a + d| for the determinant-one representative.
    pub fn normalized_trace(&self) -> Result<f64> {
        if self.antiholomorphic {
            return Err(LabError::Antiholomorphic);
        }
        Ok((self.a + self.d).norm())
    }

    /// Largest entrywise difference, minimised over the two sign representatives.
    pub fn distance(&self, other: &MoebiusMap) -> f64 {
        if self.antiholomorphic != other.antiholomorphic {
            return f64::INFINITY;
        }
        let p = self.entries();
        let q = other.entries();
        let same = (0..4).map(|k| (p[k] - q[k]).norm()).fold(0.0, f64::max);
        let flip = (0..4).map(|k| (p[k] + q[k]).norm()).fold(0.0, f64::max);
        same.min(flip)
    }

    pub fn approx_eq(&self, other: &MoebiusMap, tol: f64) -> bool {
        self.distance(other) <= tol
    }
}

/// Disk automorphism test: preserves the unit circle (checked on a few points).
pub fn is_disk_automorphism(m: &MoebiusMap, tol: f64) -> bool {
    (0..8).all(|k| {
        let z = C64::from_polar(1.0, k as f64 * std::f64::consts::FRAC_PI_4 + 0.1);
        (m.apply_c(z).norm() - 1.0).abs() <= tol
    }) && m.apply_c(ZERO).norm() < 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_fixes_points() {
        let z = Point::Finite(c(0.3, 0.4));
        assert_eq!(MoebiusMap::identity().apply(z).unwrap(), z);
        assert_eq!(MoebiusMap::identity().apply(Point::Infinity).unwrap(), Point::Infinity);
    }

    #[test]
    fn cayley_sends_zero_to_i_and_one_to_infinity() {
        let m = MoebiusMap::cayley();
        let w = m.apply(Point::Finite(ZERO)).unwrap().finite().unwrap();
        assert!((w - I).norm() < 1e-15);
        assert_eq!(m.apply(Point::Finite(ONE)).unwrap(), Point::Infinity);
        let back = m.inverse().apply(Point::Infinity).unwrap().finite().unwrap();
        assert!((back - ONE).norm() < 1e-15);
    }

    #[test]
    fn automorphism_moves_origin() {
        let m = MoebiusMap::disk_automorphism(c(0.5, 0.0)).unwrap();
        assert!((m.apply_c(ZERO) - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn derivative_modulus_matches_one_minus_a_squared() {
        let m = MoebiusMap::disk_automorphism(c(0.5, 0.0)).unwrap();
        assert!((m.derivative_modulus(ZERO).unwrap() - 0.75).abs() < 1e-15);
        let h = 1e-6;
        let fd = (m.apply_c(c(h, 0.0)) - m.apply_c(c(-h, 0.0))).norm() / (2.0 * h);
        assert!((fd - 0.75).abs() / 0.75 < 1e-6);
    }

    #[test]
    fn derivative_modulus_rejects_pole() {
        let m = MoebiusMap::cayley();
        assert!(matches!(m.derivative_modulus(ONE), Err(LabError::Pole(_))));
    }

    #[test]
    fn reflections_compose_to_holomorphic() {
        let s = MoebiusMap::conjugation();
        let r = MoebiusMap::new(ONE, ZERO, ZERO, ONE, true)
            .unwrap()
            .compose(&MoebiusMap::rotation(0.7));
        let p = s.compose(&r);
        assert!(!p.is_antiholomorphic());
        assert!(s.compose(&s).approx_eq(&MoebiusMap::identity(), 1e-15));
    }

    #[test]
    fn rotations_add() {
        let m = MoebiusMap::rotation(0.4).compose(&MoebiusMap::rotation(1.1));
        assert!(m.approx_eq(&MoebiusMap::rotation(1.5), 1e-14));
    }

    #[test]
    fn singular_matrix_rejected() {
        assert!(MoebiusMap::new(ONE, ONE, ONE, ONE, false).is_err());
    }

    #[test]
    fn canonical_sign_is_unique() {
        let m = MoebiusMap::new(c(-2.0, 0.0), ZERO, ZERO, c(-0.5, 0.0), false).unwrap();
        let n = MoebiusMap::new(c(2.0, 0.0), ZERO, ZERO, c(0.5, 0.0), false).unwrap();
        assert_eq!(m, n);
        assert!(m.entries()[0].re > 0.0);
    }

    fn disk_point() -> impl Strategy<Value = C64> {
        (0.0..0.95f64, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| C64::from_polar(r, t))
    }

    fn automorphism() -> impl Strategy<Value = MoebiusMap> {
        (disk_point(), 0.0..std::f64::consts::TAU, any::<bool>()).prop_map(|(a, t, anti)| {
            let m = MoebiusMap::rotation(t).compose(&MoebiusMap::disk_automorphism(a).unwrap());
            if anti {
                m.compose(&MoebiusMap::conjugation())
            } else {
                m
            }
        })
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(m in automorphism()) {
            prop_assert!(m.compose(&m.inverse()).approx_eq(&MoebiusMap::identity(), 1e-12));
            prop_assert!(m.inverse().compose(&m).approx_eq(&MoebiusMap::identity(), 1e-12));
        }

        #[test]
        fn composition_is_associative(a in automorphism(), b in automorphism(), c in automorphism()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.approx_eq(&right, 1e-10));
        }

        #[test]
        fn composition_acts_as_composition(a in automorphism(), b in automorphism(), z in disk_point()) {
            let lhs = a.compose(&b).apply_c(z);
            let rhs = a.apply_c(b.apply_c(z));
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }

        #[test]
        fn chain_rule(a in automorphism(), b in automorphism(), z in disk_point()) {
            let lhs = a.compose(&b).derivative_modulus(z).unwrap();
            let rhs = a.derivative_modulus(b.apply_c(z)).unwrap() * b.derivative_modulus(z).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
        }

        #[test]
        fn conformal_identity(m in automorphism(), z in disk_point()) {
            let lhs = 1.0 - m.apply_c(z).norm_sqr();
            let rhs = m.derivative_modulus(z).unwrap() * (1.0 - z.norm_sqr());
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn automorphisms_preserve_circle(m in automorphism()) {
            prop_assert!(is_disk_automorphism(&m, 1e-9));
        }

        #[test]
        fn determinant_stays_one(a in automorphism(), b in automorphism()) {
            let [p, q, r, s] = a.compose(&b).entries();
            prop_assert!((p * s - q * r - ONE).norm() < 1e-10);
        }
    }
}
