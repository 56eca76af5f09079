//! Möbius transformations of the Riemann sphere and the chordal geometry
//! they act on.
//!
//! Maps are stored as `SL(2, C)` representatives: every constructor and
//! every composition divides by the principal square root of the
//! determinant, so the derivative is always `(cz + d)^-2`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Residual allowed on `ad - bc = 1`.
pub const DET_TOLERANCE: f64 = 1e-12;
/// Chordal residual allowed on fixed points and multipliers.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-10;

const CLASSIFY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoebiusError {
    #[error("derivative undefined at pole")]
    Pole,
    #[error("euclidean derivative undefined at infinity")]
    AtInfinity,
    #[error("map is not loxodromic (classified as {0:?})")]
    NotLoxodromic(MapClass),
    #[error("singular matrix (ad - bc = 0)")]
    Singular,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A point of the Riemann sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComplexPoint {
    Finite(Complex64),
    Infinity,
}

impl ComplexPoint {
    pub const ZERO: ComplexPoint = ComplexPoint::Finite(Complex64::new(0.0, 0.0));
    pub const ONE: ComplexPoint = ComplexPoint::Finite(Complex64::new(1.0, 0.0));
    pub const I: ComplexPoint = ComplexPoint::Finite(Complex64::new(0.0, 1.0));

    pub fn new(re: f64, im: f64) -> Self {
        Complex64::new(re, im).into()
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, ComplexPoint::Infinity)
    }

    pub fn finite(&self) -> Option<Complex64> {
        match *self {
            ComplexPoint::Finite(z) => Some(z),
            ComplexPoint::Infinity => None,
        }
    }

    pub fn conj(&self) -> Self {
        match *self {
            ComplexPoint::Finite(z) => ComplexPoint::Finite(z.conj()),
            ComplexPoint::Infinity => ComplexPoint::Infinity,
        }
    }

    /// `1/z` with `0 <-> inf`.
    pub fn recip(&self) -> Self {
        match *self {
            ComplexPoint::Infinity => ComplexPoint::ZERO,
            ComplexPoint::Finite(z) if z.norm_sqr() == 0.0 => ComplexPoint::Infinity,
            ComplexPoint::Finite(z) => z.inv().into(),
        }
    }

    /// Point from homogeneous coordinates `[u : v]`.
    pub fn from_projective(u: Complex64, v: Complex64) -> Self {
        let nu = u.norm();
        let nv = v.norm();
        if nv == 0.0 || nu > nv * 1e300 {
            return ComplexPoint::Infinity;
        }
        (u / v).into()
    }

    /// Inverse stereographic projection onto the unit sphere; `inf` is the
    /// north pole `(0, 0, 1)`.
    pub fn to_sphere(&self) -> [f64; 3] {
        match *self {
            ComplexPoint::Infinity => [0.0, 0.0, 1.0],
            ComplexPoint::Finite(z) => {
                let r2 = z.norm_sqr();
                if r2 > 1e300 {
                    return [0.0, 0.0, 1.0];
                }
                let den = 1.0 + r2;
                [2.0 * z.re / den, 2.0 * z.im / den, (r2 - 1.0) / den]
            }
        }
    }

    pub fn from_sphere(p: [f64; 3]) -> Self {
        let [x, y, z] = p;
        let den = 1.0 - z;
        if den <= 0.0 {
            return ComplexPoint::Infinity;
        }
        ComplexPoint::new(x / den, y / den)
    }
}

impl From<Complex64> for ComplexPoint {
    /// Non-finite components collapse to the point at infinity.
    fn from(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            ComplexPoint::Finite(Complex64::new(z.re, z.im))
        } else {
            ComplexPoint::Infinity
        }
    }
}

impl fmt::Display for ComplexPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComplexPoint::Finite(z) => write!(f, "{}{:+}i", z.re, z.im),
            ComplexPoint::Infinity => write!(f, "inf"),
        }
    }
}

impl Serialize for ComplexPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ComplexPoint::Finite(z) => [z.re, z.im].serialize(s),
            ComplexPoint::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ComplexPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Pair([f64; 2]),
            Tag(String),
        }
        match Repr::deserialize(d)? {
            Repr::Pair([re, im]) => Ok(ComplexPoint::new(re, im)),
            Repr::Tag(t) if t == "inf" => Ok(ComplexPoint::Infinity),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!("expected [re, im] or \"inf\", got \"{t}\""))),
        }
    }
}

/// Chordal distance on the unit sphere, in `[0, 2]`.
pub fn chordal(x: ComplexPoint, y: ComplexPoint) -> f64 {
    match (x, y) {
        (ComplexPoint::Infinity, ComplexPoint::Infinity) => 0.0,
        (ComplexPoint::Finite(z), ComplexPoint::Infinity)
        | (ComplexPoint::Infinity, ComplexPoint::Finite(z)) => 2.0 / 1f64.hypot(z.norm()),
        (ComplexPoint::Finite(a), ComplexPoint::Finite(b)) => {
            let d = 2.0 * (a - b).norm() / (1f64.hypot(a.norm()) * 1f64.hypot(b.norm()));
            d.min(2.0)
        }
    }
}

/// `phi(x, y) = chordal(x, y)^2 / 2 = 1 - cos r`, in `[0, 2]`.
pub fn phi(x: ComplexPoint, y: ComplexPoint) -> f64 {
    let c = chordal(x, y);
    0.5 * c * c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MapClass {
    Identity,
    Elliptic,
    Parabolic,
    Hyperbolic,
    Loxodromic,
}

impl MapClass {
    /// Hyperbolic maps count as loxodromic.
    pub fn is_loxodromic(self) -> bool {
        matches!(self, MapClass::Hyperbolic | MapClass::Loxodromic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointData {
    pub attracting: ComplexPoint,
    pub repelling: ComplexPoint,
    /// `|multiplier| > 1`; the map has derivative `multiplier` at the
    /// repelling point and `1/multiplier` at the attracting one.
    pub multiplier: Complex64,
}

/// `z -> (az + b)/(cz + d)` with `ad - bc = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoebiusMap {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
}

impl MoebiusMap {
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self, MoebiusError> {
        let det = a * d - b * c;
        let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
        if !(det.norm() > 1e-28 * scale * scale) || !det.re.is_finite() || !det.im.is_finite() {
            return Err(MoebiusError::Singular);
        }
        Ok(MoebiusMap { a, b, c, d }.normalized())
    }

    pub fn from_real(a: f64, b: f64, c: f64, d: f64) -> Result<Self, MoebiusError> {
        Self::new(a.into(), b.into(), c.into(), d.into())
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MoebiusMap { a: one, b: zero, c: zero, d: one }
    }

    /// `z -> k z`.
    pub fn scaling(k: Complex64) -> Result<Self, MoebiusError> {
        Self::new(k, 0.0.into(), 0.0.into(), 1.0.into())
    }

    /// `z -> z + t`.
    pub fn translation(t: Complex64) -> Self {
        MoebiusMap { a: 1.0.into(), b: t, c: 0.0.into(), d: 1.0.into() }
    }

    /// The involution `z -> -1/z`.
    pub fn negative_inversion() -> Self {
        MoebiusMap { a: 0.0.into(), b: 1.0.into(), c: (-1.0).into(), d: 0.0.into() }
    }

    /// Maps the exterior of the circle `(c1, r1)` onto the interior of
    /// `(c2, r2)` via `z -> c2 - r1 r2 / (z - c1)`. Both circles are the
    /// isometric circles of the result.
    pub fn circle_pairing(c1: Complex64, r1: f64, c2: Complex64, r2: f64) -> Result<Self, MoebiusError> {
        if !(r1 > 0.0 && r2 > 0.0) {
            return Err(MoebiusError::InvalidParameter(format!(
                "circle radii must be positive, got {r1} and {r2}"
            )));
        }
        Self::new(c2, -(r1 * r2) - c1 * c2, 1.0.into(), -c1)
    }

    /// Map with the given repelling and attracting fixed points and
    /// multiplier (`|multiplier| > 1` is the derivative at `repelling`).
    pub fn from_fixed_points_multiplier(
        repelling: ComplexPoint,
        attracting: ComplexPoint,
        multiplier: Complex64,
    ) -> Result<Self, MoebiusError> {
        if !(multiplier.norm() > 1.0) || !multiplier.re.is_finite() || !multiplier.im.is_finite() {
            return Err(MoebiusError::InvalidParameter(format!(
                "multiplier must satisfy |multiplier| > 1, got |{multiplier}| = {}",
                multiplier.norm()
            )));
        }
        if chordal(repelling, attracting) <= 1e-12 {
            return Err(MoebiusError::InvalidParameter(
                "fixed points must be distinct".to_string(),
            ));
        }
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        // s sends repelling -> 0 and attracting -> inf
        let s = match (repelling, attracting) {
            (ComplexPoint::Finite(p), ComplexPoint::Finite(q)) => Self::new(one, -p, one, -q)?,
            (ComplexPoint::Finite(p), ComplexPoint::Infinity) => Self::new(one, -p, zero, one)?,
            (ComplexPoint::Infinity, ComplexPoint::Finite(q)) => Self::new(zero, one, one, -q)?,
            (ComplexPoint::Infinity, ComplexPoint::Infinity) => unreachable!(),
        };
        let root = multiplier.sqrt();
        let diag = MoebiusMap { a: root, b: zero, c: zero, d: root.inv() };
        Ok(s.inverse().compose(&diag).compose(&s))
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> Complex64 {
        self.a + self.d
    }

    pub fn trace_sq(&self) -> Complex64 {
        let t = self.trace();
        t * t
    }

    fn normalized(self) -> Self {
        let k = self.det().sqrt().inv();
        MoebiusMap { a: self.a * k, b: self.b * k, c: self.c * k, d: self.d * k }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    /// Matrix product without re-normalization. Used in hot enumeration
    /// loops where the determinant drift is bounded by word length.
    #[inline]
    pub fn inverse(&self) -> MoebiusMap {
        MoebiusMap { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    /// `h ∘ self ∘ h^-1`.
    pub fn conjugate_by(&self, h: &MoebiusMap) -> MoebiusMap {
        h.compose(self).compose(&h.inverse())
    }

    pub fn apply(&self, z: ComplexPoint) -> ComplexPoint {
        match z {
            ComplexPoint::Infinity => ComplexPoint::from_projective(self.a, self.c),
            ComplexPoint::Finite(z) if z.norm() > 1e150 => {
                let w = z.inv();
                ComplexPoint::from_projective(self.a + self.b * w, self.c + self.d * w)
            }
            ComplexPoint::Finite(z) => {
                ComplexPoint::from_projective(self.a * z + self.b, self.c * z + self.d)
            }
        }
    }

    /// `γ'(z) = (cz + d)^-2`.
    pub fn derivative(&self, z: ComplexPoint) -> Result<Complex64, MoebiusError> {
        let z = z.finite().ok_or(MoebiusError::AtInfinity)?;
        let v = self.c * z + self.d;
        if v.norm() < 1e-150 {
            return Err(MoebiusError::Pole);
        }
        Ok((v * v).inv())
    }

    /// Conformal stretch factor in the chordal metric,
    /// `|γ'(z)| (1 + |z|^2) / (1 + |γz|^2)`, total on the sphere.
    #[inline]
    pub fn spherical_derivative(&self, z: ComplexPoint) -> f64 {
        match z {
            ComplexPoint::Infinity => 1.0 / (self.a.norm_sqr() + self.c.norm_sqr()),
            ComplexPoint::Finite(z) if z.norm_sqr() > 1.0 => {
                let w = z.inv();
                (1.0 + w.norm_sqr())
                    / ((self.a + self.b * w).norm_sqr() + (self.c + self.d * w).norm_sqr())
            }
            ComplexPoint::Finite(z) => {
                (1.0 + z.norm_sqr())
                    / ((self.a * z + self.b).norm_sqr() + (self.c * z + self.d).norm_sqr())
            }
        }
    }

    pub fn classify(&self) -> MapClass {
        let t2 = self.trace_sq();
        let scale = t2.norm().max(1.0);
        let is_real = t2.im.abs() <= CLASSIFY_TOLERANCE * scale;
        if is_real && (t2.re - 4.0).abs() <= CLASSIFY_TOLERANCE * scale {
            let ent = self.a.norm().max(self.d.norm());
            let off = self.b.norm().max(self.c.norm()).max((self.a - self.d).norm());
            if off <= CLASSIFY_TOLERANCE * ent.max(1.0) {
                MapClass::Identity
            } else {
                MapClass::Parabolic
            }
        } else if is_real && t2.re >= 0.0 && t2.re < 4.0 {
            MapClass::Elliptic
        } else if is_real && t2.re > 4.0 {
            MapClass::Hyperbolic
        } else {
            MapClass::Loxodromic
        }
    }

    pub fn fixed_points_multiplier(&self) -> Result<FixedPointData, MoebiusError> {
        let class = self.classify();
        if !class.is_loxodromic() {
            return Err(MoebiusError::NotLoxodromic(class));
        }
        let t = self.trace();
        let disc = (t * t - 4.0).sqrt();
        let k1 = (t + disc) * 0.5;
        let k2 = (t - disc) * 0.5;
        let big = if k1.norm() >= k2.norm() { k1 } else { k2 };
        let small = big.inv();
        Ok(FixedPointData {
            attracting: self.eigen_point(big),
            repelling: self.eigen_point(small),
            multiplier: big * big,
        })
    }

    fn eigen_point(&self, mu: Complex64) -> ComplexPoint {
        let (u1, v1) = (self.b, mu - self.a);
        let (u2, v2) = (mu - self.d, self.c);
        if u1.norm_sqr() + v1.norm_sqr() >= u2.norm_sqr() + v2.norm_sqr() {
            ComplexPoint::from_projective(u1, v1)
        } else {
            ComplexPoint::from_projective(u2, v2)
        }
    }

    /// Entrywise distance to `other`, minimised over the sign ambiguity.
    pub fn distance(&self, other: &MoebiusMap) -> f64 {
        let plus = [self.a - other.a, self.b - other.b, self.c - other.c, self.d - other.d];
        let minus = [self.a + other.a, self.b + other.b, self.c + other.c, self.d + other.d];
        let m = |e: [Complex64; 4]| e.iter().map(|x| x.norm()).fold(0.0, f64::max);
        m(plus).min(m(minus))
    }
}

impl fmt::Display for MoebiusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn times4() -> MoebiusMap {
        MoebiusMap::from_real(2.0, 0.0, 0.0, 0.5).unwrap()
    }

    fn close(a: ComplexPoint, b: ComplexPoint, tol: f64) -> bool {
        chordal(a, b) <= tol
    }

    #[test]
    fn apply_examples() {
        let z = ComplexPoint::new(1.0, 2.0);
        assert_eq!(MoebiusMap::identity().apply(z), z);
        let inv = MoebiusMap::negative_inversion();
        assert!(close(inv.apply(ComplexPoint::I), ComplexPoint::I, 1e-15));
        assert_eq!(times4().apply(ComplexPoint::Infinity), ComplexPoint::Infinity);
        assert_eq!(inv.apply(ComplexPoint::ZERO), ComplexPoint::Infinity);
        assert_eq!(inv.apply(ComplexPoint::Infinity), ComplexPoint::ZERO);
    }

    #[test]
    fn compose_examples() {
        let m = MoebiusMap::new(c(1.0, 2.0), c(0.5, -1.0), c(0.3, 0.1), c(2.0, 0.0)).unwrap();
        assert!(m.compose(&m.inverse()).distance(&MoebiusMap::identity()) < 1e-12);
        let sixteen = times4().compose(&times4());
        assert!(sixteen.distance(&MoebiusMap::scaling(c(16.0, 0.0)).unwrap()) < 1e-14);
        assert!((m.det() - 1.0).norm() < DET_TOLERANCE);
    }

    #[test]
    fn derivative_examples() {
        let z = ComplexPoint::new(0.7, -0.2);
        assert_eq!(MoebiusMap::identity().derivative(z).unwrap(), c(1.0, 0.0));
        assert!((times4().derivative(ComplexPoint::ONE).unwrap() - 4.0).norm() < 1e-14);
        let d = MoebiusMap::negative_inversion().derivative(ComplexPoint::new(2.0, 0.0)).unwrap();
        assert!((d.norm() - 0.25).abs() < 1e-15);
        assert_eq!(
            MoebiusMap::negative_inversion().derivative(ComplexPoint::ZERO),
            Err(MoebiusError::Pole)
        );
        assert_eq!(times4().derivative(ComplexPoint::Infinity), Err(MoebiusError::AtInfinity));
    }

    #[test]
    fn spherical_derivative_examples() {
        assert_eq!(MoebiusMap::identity().spherical_derivative(ComplexPoint::new(3.0, 1.0)), 1.0);
        assert!((MoebiusMap::negative_inversion().spherical_derivative(ComplexPoint::ZERO) - 1.0).abs() < 1e-15);
        assert!((times4().spherical_derivative(ComplexPoint::ZERO) - 4.0).abs() < 1e-15);
        assert!((times4().spherical_derivative(ComplexPoint::Infinity) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_examples() {
        let fp = times4().fixed_points_multiplier().unwrap();
        assert!(close(fp.repelling, ComplexPoint::ZERO, 1e-15));
        assert_eq!(fp.attracting, ComplexPoint::Infinity);
        assert!((fp.multiplier - 4.0).norm() < 1e-14);

        let shifted = times4().conjugate_by(&MoebiusMap::translation(c(1.0, 0.0)));
        let fp = shifted.fixed_points_multiplier().unwrap();
        assert!(close(fp.repelling, ComplexPoint::ONE, 1e-12));
        assert!(fp.attracting.is_infinite() || chordal(fp.attracting, ComplexPoint::Infinity) < 1e-12);
        assert!((fp.multiplier - 4.0).norm() < 1e-12);

        let parabolic = MoebiusMap::translation(c(1.0, 0.0));
        assert_eq!(
            parabolic.fixed_points_multiplier(),
            Err(MoebiusError::NotLoxodromic(MapClass::Parabolic))
        );
    }

    #[test]
    fn from_fixed_points_examples() {
        let m = MoebiusMap::from_fixed_points_multiplier(ComplexPoint::ZERO, ComplexPoint::Infinity, c(4.0, 0.0))
            .unwrap();
        assert!(m.distance(&times4()) < 1e-14);
        let m = MoebiusMap::from_fixed_points_multiplier(ComplexPoint::new(1.0, 0.0), ComplexPoint::new(-1.0, 0.0), c(9.0, 0.0))
            .unwrap();
        assert!((m.trace_sq() - (9.0 + 2.0 + 1.0 / 9.0)).norm() < 1e-10);
        assert!(MoebiusMap::from_fixed_points_multiplier(ComplexPoint::ONE, ComplexPoint::ONE, c(4.0, 0.0)).is_err());
        assert!(MoebiusMap::from_fixed_points_multiplier(ComplexPoint::ZERO, ComplexPoint::ONE, c(0.5, 0.0)).is_err());
    }

    #[test]
    fn chordal_examples() {
        let x = ComplexPoint::new(0.3, -0.8);
        assert_eq!(chordal(x, x), 0.0);
        assert_eq!(chordal(ComplexPoint::ZERO, ComplexPoint::Infinity), 2.0);
        assert_eq!(phi(ComplexPoint::ZERO, ComplexPoint::Infinity), 2.0);
        assert!((chordal(ComplexPoint::ZERO, ComplexPoint::ONE) - 2f64.sqrt()).abs() < 1e-15);
        assert!((phi(ComplexPoint::ZERO, ComplexPoint::ONE) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn classification() {
        assert_eq!(MoebiusMap::identity().classify(), MapClass::Identity);
        assert_eq!(times4().classify(), MapClass::Hyperbolic);
        assert_eq!(MoebiusMap::negative_inversion().classify(), MapClass::Elliptic);
        assert_eq!(MoebiusMap::translation(c(0.0, 2.0)).classify(), MapClass::Parabolic);
        let lox = MoebiusMap::scaling(c(3.0, 2.0)).unwrap();
        assert_eq!(lox.classify(), MapClass::Loxodromic);
    }

    fn point() -> impl Strategy<Value = ComplexPoint> {
        (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(x, y)| ComplexPoint::new(x, y))
    }

    fn map() -> impl Strategy<Value = MoebiusMap> {
        prop::array::uniform8(-2.0f64..2.0).prop_filter_map("singular", |e| {
            MoebiusMap::new(c(e[0], e[1]), c(e[2], e[3]), c(e[4], e[5]), c(e[6], e[7]))
                .ok()
                .filter(|m| m.entries().iter().all(|x| x.norm() < 50.0))
        })
    }

    fn loxodromic() -> impl Strategy<Value = (ComplexPoint, ComplexPoint, Complex64)> {
        (point(), point(), 1.2f64..20.0, -3.0f64..3.0)
            .prop_filter("distinct", |(p, q, _, _)| chordal(*p, *q) > 0.05)
            .prop_map(|(p, q, r, th)| (p, q, Complex64::from_polar(r, th)))
    }

    proptest! {
        #[test]
        fn determinant_after_compose(m1 in map(), m2 in map()) {
            prop_assert!((m1.compose(&m2).det() - 1.0).norm() < DET_TOLERANCE);
        }

        #[test]
        fn group_action(m1 in map(), m2 in map(), z in point()) {
            let lhs = m1.compose(&m2).apply(z);
            let rhs = m1.apply(m2.apply(z));
            prop_assert!(chordal(lhs, rhs) < 1e-10);
        }

        #[test]
        fn chain_rule(m1 in map(), m2 in map(), z in point()) {
            let lhs = m1.compose(&m2).spherical_derivative(z);
            let rhs = m1.spherical_derivative(m2.apply(z)) * m2.spherical_derivative(z);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs());
        }

        #[test]
        fn conformal_factorization((p, q, lam) in loxodromic(), x in point(), y in point()) {
            let m = MoebiusMap::from_fixed_points_multiplier(p, q, lam).unwrap();
            let lhs = phi(m.apply(x), m.apply(y));
            let rhs = m.spherical_derivative(x) * m.spherical_derivative(y) * phi(x, y);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300));
        }

        #[test]
        fn fixed_point_round_trip((p, q, lam) in loxodromic()) {
            let m = MoebiusMap::from_fixed_points_multiplier(p, q, lam).unwrap();
            let fp = m.fixed_points_multiplier().unwrap();
            prop_assert!(chordal(fp.repelling, p) < 1e-9);
            prop_assert!(chordal(fp.attracting, q) < 1e-9);
            prop_assert!((fp.multiplier - lam).norm() < 1e-9 * lam.norm());
            prop_assert!(chordal(m.apply(fp.attracting), fp.attracting) < FIXED_POINT_TOLERANCE);
            prop_assert!(chordal(m.apply(fp.repelling), fp.repelling) < FIXED_POINT_TOLERANCE);
            let t2 = m.trace_sq();
            let lam = fp.multiplier;
            prop_assert!((t2 - (lam + 2.0 + lam.inv())).norm() < 1e-10 * t2.norm().max(1.0));
        }

        #[test]
        fn classification_conjugation_stable((p, q, lam) in loxodromic(), h in map()) {
            let m = MoebiusMap::from_fixed_points_multiplier(p, q, lam).unwrap();
            prop_assert_eq!(m.classify(), m.conjugate_by(&h).classify());
        }
    }
}
