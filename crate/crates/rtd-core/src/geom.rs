//! Planar geometry primitives shared across the crate: points, rigid
//! transforms, polygons and oriented rectangles with intersection tests.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// A point (or vector) in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

pub const fn pt(x: f64, y: f64) -> Point2 {
    Point2 { x, y }
}

impl Point2 {
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product `self × other`.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn rotated(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        pt(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        pt(-self.y, self.x)
    }

    pub fn unit(self) -> Point2 {
        let n = self.norm();
        pt(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        pt(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        pt(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        pt(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        pt(-self.x, -self.y)
    }
}

/// A rigid transform `p -> R(angle) p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2 {
    pub angle: f64,
    pub translation: Point2,
}

impl Transform2 {
    pub fn identity() -> Self {
        Transform2 { angle: 0.0, translation: pt(0.0, 0.0) }
    }

    /// Transform mapping world coordinates into a frame whose origin sits at
    /// `origin` with `heading` along +x.
    pub fn world_to_frame(origin: Point2, heading: f64) -> Self {
        let r = (-origin).rotated(-heading);
        Transform2 { angle: -heading, translation: r }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        p.rotated(self.angle) + self.translation
    }

    pub fn apply_heading(&self, heading: f64) -> f64 {
        heading + self.angle
    }

    pub fn inverse(&self) -> Transform2 {
        Transform2 {
            angle: -self.angle,
            translation: (-self.translation).rotated(-self.angle),
        }
    }
}

/// Simple polygon, counter-clockwise vertex order, implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Polygon { vertices }
    }

    /// Signed area (positive for counter-clockwise orientation).
    pub fn signed_area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut a = 0.0;
        for i in 0..n {
            a += v[i].cross(v[(i + 1) % n]);
        }
        0.5 * a
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd point containment; points on the boundary may land either way.
    pub fn contains(&self, p: Point2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let t = (p.y - a.y) / (b.y - a.y);
                if p.x < a.x + t * (b.x - a.x) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Euclidean distance from `p` to the polygon boundary or interior
    /// (zero when inside).
    pub fn distance(&self, p: Point2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| dist_point_segment(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = pt(f64::INFINITY, f64::INFINITY);
        let mut hi = pt(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// True if the polygon is simple (no two non-adjacent edges intersect)
    /// and has at least three vertices.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a1, a2) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // skip adjacent edges (shared vertex)
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (b1, b2) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return false;
                }
            }
        }
        true
    }

    /// True if this polygon and `other` overlap with nonempty interior
    /// intersection (vertex containment or proper edge crossings).
    pub fn intersects_polygon(&self, other: &Polygon) -> bool {
        if self.vertices.iter().any(|&v| other.contains(v))
            || other.vertices.iter().any(|&v| self.contains(v))
        {
            return true;
        }
        for (a1, a2) in self.edges() {
            for (b1, b2) in other.edges() {
                if segments_intersect(a1, a2, b1, b2) {
                    return true;
                }
            }
        }
        false
    }
}

/// Rectangle with arbitrary pose, used for vehicle footprints and obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    /// Corner order: front-left, rear-left, rear-right, front-right (CCW).
    pub fn corners(&self) -> [Point2; 4] {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [pt(hl, hw), pt(-hl, hw), pt(-hl, -hw), pt(hl, -hw)];
        local.map(|p| self.center + p.rotated(self.heading))
    }

    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(self.corners().to_vec())
    }

    pub fn contains(&self, p: Point2) -> bool {
        let d = (p - self.center).rotated(-self.heading);
        d.x.abs() <= 0.5 * self.length && d.y.abs() <= 0.5 * self.width
    }

    /// Grown by `dl` in total length and `dw` in total width.
    pub fn inflated(&self, dl: f64, dw: f64) -> OrientedRect {
        OrientedRect { length: self.length + dl, width: self.width + dw, ..*self }
    }
}

/// Proper or touching intersection of segments `a1a2` and `b1b2`.
pub fn segments_intersect(a1: Point2, a2: Point2, b1: Point2, b2: Point2) -> bool {
    let d1 = (a2 - a1).cross(b1 - a1);
    let d2 = (a2 - a1).cross(b2 - a1);
    let d3 = (b2 - b1).cross(a1 - b1);
    let d4 = (b2 - b1).cross(a2 - b1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: Point2, q: Point2, r: Point2| {
        d == 0.0
            && r.x >= p.x.min(q.x)
            && r.x <= p.x.max(q.x)
            && r.y >= p.y.min(q.y)
            && r.y <= p.y.max(q.y)
    };
    on(d1, a1, a2, b1) || on(d2, a1, a2, b2) || on(d3, b1, b2, a1) || on(d4, b1, b2, a2)
}

pub fn dist_point_segment(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

/// Convex hull (monotone chain), CCW order. Requires at least 3 points.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    pts.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2
            && (hull[hull.len() - 1] - hull[hull.len() - 2]).cross(p - hull[hull.len() - 1])
                <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower_len
            && (hull[hull.len() - 1] - hull[hull.len() - 2]).cross(p - hull[hull.len() - 1])
                <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transform_round_trip() {
        let t = Transform2::world_to_frame(pt(3.0, -2.0), 0.7);
        let inv = t.inverse();
        for i in 0..100 {
            let p = pt((i as f64) * 0.37 - 5.0, (i as f64) * 0.11 - 3.0);
            let q = inv.apply(t.apply(p));
            assert!(p.dist(q) < 1e-12);
        }
    }

    #[test]
    fn rect_contains_and_corners() {
        let r = OrientedRect { center: pt(1.0, 1.0), heading: 0.0, length: 4.0, width: 2.0 };
        assert!(r.contains(pt(2.9, 1.9)));
        assert!(!r.contains(pt(3.1, 1.0)));
        let c = r.corners();
        assert_relative_eq!(c[0].x, 3.0);
        assert_relative_eq!(c[0].y, 2.0);
    }

    #[test]
    fn polygon_area_and_containment() {
        let sq = Polygon::new(vec![pt(0.0, 0.0), pt(1.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0)]);
        assert_relative_eq!(sq.signed_area(), 1.0);
        assert!(sq.is_ccw());
        assert!(sq.contains(pt(0.5, 0.5)));
        assert!(!sq.contains(pt(1.5, 0.5)));
        assert!(sq.is_simple());
    }

    #[test]
    fn hull_of_square_with_interior_points() {
        let pts = vec![
            pt(0.0, 0.0),
            pt(1.0, 0.0),
            pt(1.0, 1.0),
            pt(0.0, 1.0),
            pt(0.5, 0.5),
            pt(0.2, 0.8),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(Polygon::new(hull).is_ccw());
    }

    #[test]
    fn segment_intersection_cases() {
        assert!(segments_intersect(pt(0.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0), pt(1.0, 0.0)));
        assert!(!segments_intersect(pt(0.0, 0.0), pt(1.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0)));
    }
}
