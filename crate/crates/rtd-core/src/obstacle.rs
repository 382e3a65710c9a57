//! Obstacle geometry: polygon buffering into line segments and circular
//! arcs, boundary sampling with the spacings that make the discretized
//! obstacle a conservative stand-in for the full polygon, and the
//! brute-force pose oracle that audits that claim.

use crate::geom::{pt, OrientedRect, Point2, Polygon};
use crate::rng::child_rng;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A static polygonal obstacle (counter-clockwise, simple).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePolygon {
    pub polygon: Polygon,
    pub is_static: bool,
}

impl ObstaclePolygon {
    pub fn new(polygon: Polygon) -> Result<Self> {
        if polygon.vertices.len() < 3 {
            return Err(Error::invalid("obstacle polygon needs >= 3 vertices"));
        }
        if !polygon.is_ccw() {
            return Err(Error::invalid("obstacle polygon must be counter-clockwise"));
        }
        if !polygon.is_simple() {
            return Err(Error::invalid("obstacle polygon must be simple"));
        }
        Ok(ObstaclePolygon { polygon, is_static: true })
    }

    pub fn from_rect(rect: &OrientedRect) -> Self {
        ObstaclePolygon { polygon: rect.to_polygon(), is_static: true }
    }
}

/// Directed line segment of a buffered boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point2,
    pub end: Point2,
}

/// Counter-clockwise circular arc (radius = buffer distance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: Point2,
    pub radius: f64,
    pub start_angle: f64,
    /// Positive sweep (rad).
    pub span: f64,
}

impl Arc {
    pub fn point_at(&self, frac: f64) -> Point2 {
        let a = self.start_angle + self.span * frac;
        self.center + pt(a.cos(), a.sin()) * self.radius
    }

    /// Straight-line distance between the arc endpoints.
    pub fn endpoint_chord(&self) -> f64 {
        2.0 * self.radius * (self.span.abs() / 2.0).sin()
    }
}

/// Boundary of a buffered polygon: edge offsets joined by arcs at convex
/// vertices and by miter intersections at reflex vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedBoundary {
    pub segments: Vec<Segment>,
    pub arcs: Vec<Arc>,
    pub b: f64,
}

impl BufferedBoundary {
    /// Area enclosed by the boundary (shoelace over the piecewise curve plus
    /// the circular-segment bulges of the arcs).
    pub fn enclosed_area(&self) -> f64 {
        let mut twice = 0.0;
        for s in &self.segments {
            twice += s.start.cross(s.end);
        }
        let mut arc_extra = 0.0;
        for a in &self.arcs {
            let p0 = a.point_at(0.0);
            let p1 = a.point_at(1.0);
            twice += p0.cross(p1);
            arc_extra += 0.5 * a.radius * a.radius * (a.span - a.span.sin());
        }
        0.5 * twice + arc_extra
    }

    /// Polygonized version (arcs subdivided at `max_step` chord length),
    /// pushed outward so the polygon circumscribes the true boundary.
    pub fn polygonize_outer(&self, max_step: f64) -> Polygon {
        let mut vertices = Vec::new();
        // walk pieces in construction order: segment i, then the join after it
        let n = self.segments.len();
        let mut arc_iter = self.arcs.iter().peekable();
        for i in 0..n {
            let s = self.segments[i];
            vertices.push(s.start);
            vertices.push(s.end);
            if let Some(a) = arc_iter.peek() {
                if a.point_at(0.0).dist(s.end) < 1e-6 {
                    let a = arc_iter.next().unwrap();
                    let n_sub = ((a.radius * a.span / max_step).ceil() as usize).max(1);
                    let inflate = 1.0 / (a.span / (2.0 * n_sub as f64)).cos();
                    for j in 1..n_sub {
                        let p = a.point_at(j as f64 / n_sub as f64);
                        vertices.push(a.center + (p - a.center) * inflate);
                    }
                }
            }
        }
        vertices.dedup_by(|p, q| p.dist(*q) < 1e-9);
        Polygon::new(vertices)
    }
}

fn outward_normal(dir: Point2) -> Point2 {
    pt(dir.y, -dir.x)
}

/// Offset a counter-clockwise polygon boundary outward: each edge moves by
/// `offset(normal)`, joined by an arc at convex vertices when `arcs` is set
/// (constant offset) or a miter intersection otherwise. Reflex vertices are
/// always mitered, which over-covers the exact offset there.
fn offset_boundary(
    poly: &Polygon,
    offset: &dyn Fn(Point2) -> f64,
    arcs: bool,
) -> (Vec<Segment>, Vec<Arc>) {
    let verts = &poly.vertices;
    let n = verts.len();
    let mut segments: Vec<Segment> = Vec::with_capacity(n);
    let mut arc_list: Vec<Arc> = Vec::new();

    let edge_dir = |i: usize| (verts[(i + 1) % n] - verts[i]).unit();
    for i in 0..n {
        let d = edge_dir(i);
        let nrm = outward_normal(d);
        let off = offset(nrm);
        segments.push(Segment { start: verts[i] + nrm * off, end: verts[(i + 1) % n] + nrm * off });
    }

    // joins at each vertex v_{i+1} between edge i and edge i+1
    let mut out_segments = segments.clone();
    for i in 0..n {
        let j = (i + 1) % n;
        let v = verts[j];
        let d1 = edge_dir(i);
        let d2 = edge_dir(j);
        let cross = d1.cross(d2);
        let n1 = outward_normal(d1);
        let n2 = outward_normal(d2);
        if cross.abs() < 1e-12 {
            continue; // collinear: offsets already meet
        }
        if cross > 0.0 && arcs {
            // convex vertex: radius-b arc from n1 to n2
            let start_angle = n1.y.atan2(n1.x);
            let mut span = n2.y.atan2(n2.x) - start_angle;
            while span < 0.0 {
                span += std::f64::consts::TAU;
            }
            arc_list.push(Arc { center: v, radius: offset(n1), start_angle, span });
        } else {
            // miter: intersect the two offset lines
            let p1 = v + n1 * offset(n1);
            let p2 = v + n2 * offset(n2);
            // solve p1 + t d1 = p2 + s d2
            let rhs = p2 - p1;
            let t = rhs.cross(d2) / cross;
            let q = p1 + d1 * t;
            out_segments[i].end = q;
            out_segments[j].start = q;
        }
    }
    (out_segments, arc_list)
}

/// Buffer a polygon by `b` (Minkowski disk sum): edge offsets joined by
/// radius-`b` arcs at convex vertices. `footprint_width` bounds the legal
/// buffer range.
pub fn buffer_polygon(
    obstacle: &ObstaclePolygon,
    b: f64,
    footprint_width: f64,
) -> Result<BufferedBoundary> {
    if !(b > 0.0 && b < footprint_width / 2.0) {
        return Err(Error::invalid(format!(
            "buffer distance must lie in (0, W/2) = (0, {}); got {b}",
            footprint_width / 2.0
        )));
    }
    let (segments, arcs) = offset_boundary(&obstacle.polygon, &|_| b, true);
    Ok(BufferedBoundary { segments, arcs, b })
}

/// Expand a polygon by the prediction-error box: every edge moves outward by
/// the box support in its normal direction, with miter joins. The result
/// contains the exact box Minkowski sum.
pub fn expand_polygon(poly: &Polygon, eps_x: f64, eps_y: f64) -> Polygon {
    if eps_x <= 0.0 && eps_y <= 0.0 {
        return poly.clone();
    }
    let support = move |n: Point2| eps_x * n.x.abs() + eps_y * n.y.abs();
    let (segments, _) = offset_boundary(poly, &support, false);
    let mut vertices: Vec<Point2> = segments.iter().map(|s| s.start).collect();
    vertices.dedup_by(|p, q| p.dist(*q) < 1e-9);
    Polygon::new(vertices)
}

/// Uniformly subdivide a curve so consecutive points sit within `s` of each
/// other in the 2-norm, endpoints included.
pub fn sample_segment(seg: &Segment, s: f64) -> Vec<Point2> {
    assert!(s > 0.0, "spacing must be positive");
    let len = seg.start.dist(seg.end);
    if len < 1e-12 {
        return vec![seg.start];
    }
    let n = (len / s).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| seg.start + (seg.end - seg.start) * (i as f64 / n as f64))
        .collect()
}

/// Arc variant of [`sample_segment`]; spacing is measured by chord.
pub fn sample_arc(arc: &Arc, s: f64) -> Vec<Point2> {
    assert!(s > 0.0, "spacing must be positive");
    if arc.span.abs() < 1e-12 || arc.radius < 1e-12 {
        return vec![arc.point_at(0.0)];
    }
    let chord = arc.endpoint_chord();
    let mut n = (chord / s).ceil().max(1.0) as usize;
    while 2.0 * arc.radius * (arc.span.abs() / (2.0 * n as f64)).sin() > s {
        n += 1;
    }
    (0..=n).map(|i| arc.point_at(i as f64 / n as f64)).collect()
}

/// Finite boundary sample of a buffered obstacle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedObstacle {
    pub points: Vec<Point2>,
    /// Segment spacing 2b.
    pub s_l: f64,
    /// Arc spacing 2b sin(pi/4).
    pub s_a: f64,
    pub source_id: usize,
}

/// Lemma-2 spacings for a buffer distance.
pub fn spacings(b: f64) -> (f64, f64) {
    (2.0 * b, 2.0 * b * (std::f64::consts::FRAC_PI_4).sin())
}

/// Sample every piece of a buffered boundary at the Lemma-2 spacings and
/// deduplicate shared endpoints.
pub fn discretize(boundary: &BufferedBoundary, source_id: usize) -> DiscretizedObstacle {
    let (s_l, s_a) = spacings(boundary.b);
    let mut points: Vec<Point2> = Vec::new();
    for seg in &boundary.segments {
        points.extend(sample_segment(seg, s_l));
    }
    for arc in &boundary.arcs {
        points.extend(sample_arc(arc, s_a));
    }
    // exact duplicates come only from shared endpoints
    let mut unique: Vec<Point2> = Vec::with_capacity(points.len());
    for p in points {
        if !unique.iter().any(|q| q.dist(p) < 1e-9) {
            unique.push(p);
        }
    }
    DiscretizedObstacle { points: unique, s_l, s_a, source_id }
}

/// Full pipeline for one obstacle: expand by the estimation-error box,
/// buffer by `b`, discretize.
pub fn discretize_obstacle(
    obstacle: &ObstaclePolygon,
    b: f64,
    eps_x: f64,
    eps_y: f64,
    footprint_width: f64,
    source_id: usize,
) -> Result<DiscretizedObstacle> {
    let expanded = expand_polygon(&obstacle.polygon, eps_x, eps_y);
    let boundary = buffer_polygon(
        &ObstaclePolygon { polygon: expanded, is_static: obstacle.is_static },
        b,
        footprint_width,
    )?;
    Ok(discretize(&boundary, source_id))
}

/// Brute-force audit of discretization conservatism: sample rectangle poses
/// whose interior overlaps the raw polygon and count poses that contain no
/// discretized point. A sound discretization yields zero.
pub fn conservativeness_oracle(
    obstacle: &ObstaclePolygon,
    xp: &DiscretizedObstacle,
    footprint_length: f64,
    footprint_width: f64,
    n_poses: usize,
    seed: u64,
) -> usize {
    let mut rng = child_rng(seed, "pose-oracle", 0);
    let (lo, hi) = obstacle.polygon.bounding_box();
    let reach = 0.5 * footprint_length.hypot(footprint_width);
    let mut violations = 0;
    let mut accepted = 0;
    let mut attempts = 0usize;
    while accepted < n_poses && attempts < n_poses * 1000 {
        attempts += 1;
        let rect = OrientedRect {
            center: pt(
                rng.gen_range(lo.x - reach..hi.x + reach),
                rng.gen_range(lo.y - reach..hi.y + reach),
            ),
            heading: rng.gen_range(0.0..std::f64::consts::TAU),
            length: footprint_length,
            width: footprint_width,
        };
        if !rect.to_polygon().intersects_polygon(&obstacle.polygon) {
            continue;
        }
        accepted += 1;
        if !xp.points.iter().any(|&p| rect.contains(p)) {
            violations += 1;
        }
    }
    assert!(accepted == n_poses, "pose sampler starved: {accepted}/{n_poses}");
    violations
}
