use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::GeometryError;

const EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Convex polygon with counterclockwise vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

impl ConvexPolygon {
    /// Validates convexity and normalizes orientation to counterclockwise.
    /// Repeated consecutive vertices are dropped.
    pub fn new(points: Vec<Point>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut pts: Vec<Point> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Point| (p - *q).norm() > EPS) {
                pts.push(p);
            }
        }
        while pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() <= EPS {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(GeometryError::TooFewVertices(pts.len()));
        }
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let area = signed_area(&pts);
        if area <= EPS {
            return Err(GeometryError::Degenerate);
        }
        let n = pts.len();
        let scale = pts.iter().map(|p| p.x.abs().max(p.y.abs())).fold(1.0, f64::max);
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            let c = pts[(i + 2) % n];
            if (b - a).cross(c - b) < -1e-9 * scale * scale {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { vertices: pts })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Boundary-inclusive containment test.
    pub fn contains(&self, p: Point) -> bool {
        self.edges().all(|(a, b)| (b - a).cross(p - a) >= -1e-9 * (b - a).norm())
    }

    pub fn translated(&self, d: Point) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
        }
    }

    /// Rotation by `angle` about the origin, then translation by `d`.
    pub fn transformed(&self, angle: f64, d: Point) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|&v| v.rotate(angle) + d).collect(),
        }
    }

    /// Bounding rectangle as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Vertices of `self ∩ other` (possibly fewer than three when the
    /// intersection is empty or degenerate). Sutherland–Hodgman: `self` is
    /// clipped by the half-plane of each edge of `other`.
    pub fn clip(&self, other: &ConvexPolygon) -> Vec<Point> {
        let mut out = self.vertices.clone();
        for (a, b) in other.edges() {
            if out.is_empty() {
                break;
            }
            let edge = b - a;
            let side = |p: Point| edge.cross(p - a);
            let input = std::mem::take(&mut out);
            let n = input.len();
            for i in 0..n {
                let cur = input[i];
                let prev = input[(i + n - 1) % n];
                let (sc, sp) = (side(cur), side(prev));
                if sc >= 0.0 {
                    if sp < 0.0 {
                        out.push(segment_cross(prev, cur, sp, sc));
                    }
                    out.push(cur);
                } else if sp >= 0.0 {
                    out.push(segment_cross(prev, cur, sp, sc));
                }
            }
        }
        out
    }

    /// Parameter interval `[t0, t1]` of the segment `p + t (q − p)`,
    /// `t ∈ [0, 1]`, that lies inside this polygon (Cyrus–Beck).
    pub fn clip_segment(&self, p: Point, q: Point) -> Option<(f64, f64)> {
        let d = q - p;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (a, b) in self.edges() {
            let e = b - a;
            // inside ⇔ e × (x − a) ≥ 0
            let num = e.cross(p - a);
            let den = e.cross(d);
            if den.abs() < 1e-15 {
                if num < 0.0 {
                    return None;
                }
                continue;
            }
            let t = -num / den;
            if den > 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

fn segment_cross(p: Point, q: Point, sp: f64, sq: f64) -> Point {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Shoelace formula; positive for counterclockwise order.
pub fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * s
}

/// Area of `a ∩ b`, zero for disjoint or touching polygons.
pub fn convex_intersection_area(a: &ConvexPolygon, b: &ConvexPolygon) -> f64 {
    let (alo, ahi) = a.bounds();
    let (blo, bhi) = b.bounds();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return 0.0;
    }
    signed_area(&a.clip(b)).max(0.0)
}

/// Intersection area together with its gradient with respect to a rigid
/// translation of `moving`.
///
/// Translating `moving` by `δ` sweeps each of its edges along `δ`; only the
/// part of an edge lying inside `fixed` changes the overlap, so the
/// derivative is `Σ_e len(e ∩ fixed) · n_e` with `n_e` the outward unit
/// normal of edge `e`.
pub fn intersection_area_and_translation_grad(
    moving: &ConvexPolygon,
    fixed: &ConvexPolygon,
) -> (f64, Point) {
    let area = convex_intersection_area(moving, fixed);
    if area <= 0.0 {
        return (0.0, Point::default());
    }
    let mut grad = Point::default();
    for (a, b) in moving.edges() {
        let Some((t0, t1)) = fixed.clip_segment(a, b) else {
            continue;
        };
        let e = b - a;
        let len = e.norm() * (t1 - t0);
        // outward normal of a counterclockwise edge
        let n = Point::new(e.y, -e.x) * (1.0 / e.norm());
        grad = grad + n * len;
    }
    (area, grad)
}
