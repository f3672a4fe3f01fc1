//! Rounded squares and the ε-grid box families.
//!
//! Every box used by the tracer and the bump forms is a similar copy of one
//! rounded square: an axis-aligned square whose corners are replaced by
//! quarter-circle arcs. Scaling a box scales its corner radius with it.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("half width must be positive and finite, got {0}")]
    HalfWidth(f64),
    #[error("corner radius {radius} must lie in [0, half width {half_width})")]
    CornerRadius { radius: f64, half_width: f64 },
    #[error("epsilon {0} must lie in (0, 1/2)")]
    Epsilon(f64),
    #[error("gap value phi {phi} must lie in (0, epsilon = {epsilon})")]
    Phi { phi: f64, epsilon: f64 },
    #[error("corner exponent beta {0} must be at least 1")]
    Beta(f64),
}

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// Linear interpolation `self + t (other - self)`.
    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }

    pub fn abs(self) -> Point {
        Point::new(self.x.abs(), self.y.abs())
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point::new(x, y)
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// A site of the integer lattice ℤ², serialized as `[z1, z2]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    /// Chebyshev norm `max(|x|, |y|)`.
    pub fn max_norm(self) -> i64 {
        self.x.abs().max(self.y.abs())
    }

    /// The physical location `ε z`.
    pub fn scaled(self, epsilon: f64) -> Point {
        Point::new(self.x as f64 * epsilon, self.y as f64 * epsilon)
    }

    /// All sites with `max(|x|, |y|) <= radius`, row-major.
    pub fn window(radius: i64) -> impl Iterator<Item = LatticePoint> {
        (-radius..=radius).flat_map(move |y| (-radius..=radius).map(move |x| LatticePoint::new(x, y)))
    }
}

impl From<[i64; 2]> for LatticePoint {
    fn from([x, y]: [i64; 2]) -> Self {
        LatticePoint::new(x, y)
    }
}

impl From<LatticePoint> for [i64; 2] {
    fn from(z: LatticePoint) -> Self {
        [z.x, z.y]
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Closed axis-aligned square with quarter-circle corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundedSquare {
    pub center: Point,
    pub half_width: f64,
    pub corner_radius: f64,
}

impl RoundedSquare {
    pub fn new(center: Point, half_width: f64, corner_radius: f64) -> Result<Self, GeometryError> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(GeometryError::HalfWidth(half_width));
        }
        if !(corner_radius >= 0.0 && corner_radius < half_width) {
            return Err(GeometryError::CornerRadius {
                radius: corner_radius,
                half_width,
            });
        }
        Ok(Self {
            center,
            half_width,
            corner_radius,
        })
    }

    /// Side length of the flat part of each edge, halved.
    fn inner(&self) -> f64 {
        self.half_width - self.corner_radius
    }

    pub fn translated(&self, offset: Point) -> Self {
        Self {
            center: self.center + offset,
            ..*self
        }
    }

    /// Similar copy scaled about its own center.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            center: self.center,
            half_width: self.half_width * factor,
            corner_radius: self.corner_radius * factor,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let q = (p - self.center).abs();
        if q.x > self.half_width || q.y > self.half_width {
            return false;
        }
        let c = self.inner();
        if q.x <= c || q.y <= c {
            return true;
        }
        let (dx, dy) = (q.x - c, q.y - c);
        dx * dx + dy * dy <= self.corner_radius * self.corner_radius
    }

    /// Minkowski functional relative to the center, `inf{λ > 0 : p ∈ center + λ (self - center)}`,
    /// resolved by bisection on [`contains`](Self::contains) to absolute tolerance 1e-12.
    pub fn gauge(&self, p: Point) -> f64 {
        let rel = p - self.center;
        if rel.x == 0.0 && rel.y == 0.0 {
            return 0.0;
        }
        let at_scale = |lambda: f64| self.scaled(lambda).contains(p);
        let mut hi = 1.0;
        while !at_scale(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if at_scale(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Closed-form gauge: the same value as [`gauge`](Self::gauge) without iteration.
    pub fn radial_scale(&self, p: Point) -> f64 {
        let q = (p - self.center).abs();
        let h = self.half_width;
        let rho = self.corner_radius;
        let square = q.x.max(q.y) / h;
        if rho == 0.0 {
            return square;
        }
        let c = self.inner();
        if q.x.min(q.y) <= square * c {
            return square;
        }
        // smallest λ with |q - λ(c, c)| = λ ρ
        let a = 2.0 * c * c - rho * rho;
        let half_b = c * (q.x + q.y);
        let cc = q.x * q.x + q.y * q.y;
        let disc = (half_b * half_b - a * cc).max(0.0);
        cc / (half_b + disc.sqrt())
    }

    /// Euclidean signed distance to the boundary, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let q = (p - self.center).abs();
        let c = self.inner();
        let (qx, qy) = (q.x - c, q.y - c);
        let outside = qx.max(0.0).hypot(qy.max(0.0));
        let inside = qx.max(qy).min(0.0);
        outside + inside - self.corner_radius
    }

    /// Parameter interval `[t0, t1]` of the infinite line `a + t (b - a)` inside the square.
    pub fn line_interval(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        let a = a - self.center;
        let d = b - self.center - a;
        let h = self.half_width;
        let c = self.inner();
        let rho = self.corner_radius;
        let mut acc: Option<(f64, f64)> = None;
        let mut merge = |iv: Option<(f64, f64)>| {
            if let Some((lo, hi)) = iv {
                acc = Some(match acc {
                    None => (lo, hi),
                    Some((l, u)) => (l.min(lo), u.max(hi)),
                });
            }
        };
        merge(slab_interval(a, d, [-h, h], [-c, c]));
        merge(slab_interval(a, d, [-c, c], [-h, h]));
        if rho > 0.0 {
            for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
                merge(disk_interval(a, d, Point::new(sx * c, sy * c), rho));
            }
        }
        acc
    }
}

fn slab_interval(a: Point, d: Point, xr: [f64; 2], yr: [f64; 2]) -> Option<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (p, v, [mn, mx]) in [(a.x, d.x, xr), (a.y, d.y, yr)] {
        if v == 0.0 {
            if p < mn || p > mx {
                return None;
            }
        } else {
            let (t1, t2) = ((mn - p) / v, (mx - p) / v);
            let (t1, t2) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            lo = lo.max(t1);
            hi = hi.min(t2);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn disk_interval(a: Point, d: Point, center: Point, r: f64) -> Option<(f64, f64)> {
    let f = a - center;
    let qa = d.dot(d);
    if qa == 0.0 {
        return (f.dot(f) <= r * r).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let half_b = f.dot(d);
    let qc = f.dot(f) - r * r;
    let disc = half_b * half_b - qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // stable roots
    let q = -(half_b + half_b.signum() * s);
    let (t1, t2) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        (q / qa, qc / q)
    };
    Some((t1.min(t2), t1.max(t2)))
}

/// Direction of a boundary crossing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HitMode {
    /// From strictly outside into the closed square. Starting inside yields no hit.
    Enter,
    /// From inside to the boundary on the way out.
    Exit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentHit {
    /// Segment parameter in `[0, 1]`.
    pub t: f64,
    pub point: Point,
}

/// First crossing of `∂sq` by the segment `a → b` in the requested direction.
pub fn segment_first_hit(a: Point, b: Point, sq: &RoundedSquare, mode: HitMode) -> Option<SegmentHit> {
    if a == b {
        return None;
    }
    let inside = sq.contains(a);
    let t = match mode {
        HitMode::Enter => {
            if inside {
                return None;
            }
            let (t0, t1) = sq.line_interval(a, b)?;
            if t0 > 1.0 || t1 < 0.0 {
                return None;
            }
            t0.max(0.0)
        }
        HitMode::Exit => {
            if !inside {
                return None;
            }
            let (_, t1) = sq.line_interval(a, b)?;
            if t1 > 1.0 {
                return None;
            }
            t1.clamp(0.0, 1.0)
        }
    };
    Some(SegmentHit {
        t,
        point: a.lerp(b, t),
    })
}

/// Whether the bounds in a [`GridSpec`] follow the asymptotic exponents or a
/// desk-scale relaxation of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    PaperFaithful,
    Relaxed,
}

/// Parameters of the ε-grid.
///
/// The base shape G has half-width 1/2 and corner radius `ε^β`; every box is
/// `εz + a G` for a scale `a` depending on the family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub epsilon: f64,
    pub phi: f64,
    /// Declared exponent in `φ ≈ ε^α`; informational.
    pub alpha: f64,
    pub beta: f64,
}

impl GridSpec {
    pub fn new(epsilon: f64, phi: f64, alpha: f64, beta: f64) -> Result<Self, GeometryError> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(GeometryError::Epsilon(epsilon));
        }
        if !(phi > 0.0 && phi < epsilon) {
            return Err(GeometryError::Phi { phi, epsilon });
        }
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(GeometryError::Beta(beta));
        }
        Ok(Self {
            epsilon,
            phi,
            alpha,
            beta,
        })
    }

    /// Desk-scale defaults: `φ = ε²` and corner radius `ε³` on the unit shape.
    pub fn relaxed(epsilon: f64) -> Result<Self, GeometryError> {
        Self::new(epsilon, epsilon * epsilon, 2.0, 3.0)
    }

    pub fn with_phi(self, phi: f64) -> Result<Self, GeometryError> {
        Self::new(self.epsilon, phi, phi.ln() / self.epsilon.ln(), self.beta)
    }

    pub fn regime(&self) -> Regime {
        if self.phi <= self.epsilon.powi(10) && self.beta >= 10.0 {
            Regime::PaperFaithful
        } else {
            Regime::Relaxed
        }
    }

    /// Corner radius of the unit shape G (half-width 1/2).
    pub fn unit_corner_radius(&self) -> f64 {
        self.epsilon.powf(self.beta)
    }

    /// Similarity factor `a` of the family box `a G`.
    pub fn scale(&self, kind: BoxKind) -> f64 {
        let e = self.epsilon;
        match kind {
            BoxKind::H => e * (1.0 - e),
            BoxKind::K => e * (1.0 - e + e * self.phi / 2.0),
            BoxKind::Z => e * (1.0 - e + e * self.phi),
            BoxKind::V => e,
        }
    }

    pub fn half_width(&self, kind: BoxKind) -> f64 {
        self.scale(kind) / 2.0
    }

    pub fn center(&self, z: LatticePoint) -> Point {
        z.scaled(self.epsilon)
    }

    pub fn family_box(&self, kind: BoxKind, z: LatticePoint) -> RoundedSquare {
        let a = self.scale(kind);
        RoundedSquare {
            center: self.center(z),
            half_width: a / 2.0,
            corner_radius: a * self.unit_corner_radius(),
        }
    }

    pub fn boxes_for(&self, z: LatticePoint) -> BoxFamily {
        BoxFamily {
            h: self.family_box(BoxKind::H, z),
            k: self.family_box(BoxKind::K, z),
            z: self.family_box(BoxKind::Z, z),
            v: self.family_box(BoxKind::V, z),
        }
    }

    /// Lattice sites whose `kind` box can meet the axis-aligned bounding box of `a` and `b`.
    pub fn candidate_sites(&self, kind: BoxKind, a: Point, b: Point) -> impl Iterator<Item = LatticePoint> {
        let h = self.half_width(kind);
        let e = self.epsilon;
        let lo = |v: f64| ((v - h) / e).ceil() as i64;
        let hi = |v: f64| ((v + h) / e).floor() as i64;
        let (x0, x1) = (lo(a.x.min(b.x)), hi(a.x.max(b.x)));
        let (y0, y1) = (lo(a.y.min(b.y)), hi(a.y.max(b.y)));
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| LatticePoint::new(x, y)))
    }

    /// The unique `kind` box containing `p`, if any. Boxes of one family are disjoint.
    pub fn locate(&self, kind: BoxKind, p: Point) -> Option<LatticePoint> {
        let z = LatticePoint::new(
            (p.x / self.epsilon).round() as i64,
            (p.y / self.epsilon).round() as i64,
        );
        self.family_box(kind, z).contains(p).then_some(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoxKind {
    H,
    K,
    Z,
    V,
}

/// The four concentric boxes attached to one lattice site.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxFamily {
    pub h: RoundedSquare,
    pub k: RoundedSquare,
    pub z: RoundedSquare,
    pub v: RoundedSquare,
}
