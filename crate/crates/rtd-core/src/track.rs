//! Randomized closed test track: a counter-clockwise loop of straights and
//! constant-curvature arcs (a rounded convex polygon), two lanes, randomly
//! placed box obstacles, road-boundary strips, and sensing with persistent
//! obstacle memory.

use crate::config::TrackConfig;
use crate::geom::{convex_hull, pt, wrap_angle, OrientedRect, Point2, Polygon};
use crate::obstacle::ObstaclePolygon;
use crate::rng::child_rng;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrackPrimitive {
    Straight {
        start: Point2,
        /// Unit direction of travel.
        dir: Point2,
        length: f64,
    },
    Arc {
        center: Point2,
        radius: f64,
        /// Angle of the arc start, measured from the center.
        start_angle: f64,
        /// Positive sweep (left turn on a counter-clockwise loop).
        span: f64,
    },
}

impl TrackPrimitive {
    pub fn length(&self) -> f64 {
        match self {
            TrackPrimitive::Straight { length, .. } => *length,
            TrackPrimitive::Arc { radius, span, .. } => radius * span,
        }
    }

    pub fn curvature(&self) -> f64 {
        match self {
            TrackPrimitive::Straight { .. } => 0.0,
            TrackPrimitive::Arc { radius, .. } => 1.0 / radius,
        }
    }

    /// Centerline pose at arc length `s` into the primitive.
    pub fn pose_at(&self, s: f64) -> (Point2, f64) {
        match self {
            TrackPrimitive::Straight { start, dir, .. } => {
                (*start + *dir * s, dir.y.atan2(dir.x))
            }
            TrackPrimitive::Arc { center, radius, start_angle, .. } => {
                let a = start_angle + s / radius;
                let p = *center + pt(a.cos(), a.sin()) * *radius;
                (p, a + std::f64::consts::FRAC_PI_2)
            }
        }
    }

    /// Closest centerline point: returns (arc length into primitive, lateral
    /// offset to the left of travel, distance).
    fn project(&self, p: Point2) -> (f64, f64, f64) {
        match self {
            TrackPrimitive::Straight { start, dir, length } => {
                let rel = p - *start;
                let s = rel.dot(*dir).clamp(0.0, *length);
                let closest = *start + *dir * s;
                let lateral = (p - closest).dot(dir.perp());
                (s, lateral, p.dist(closest))
            }
            TrackPrimitive::Arc { center, radius, start_angle, span } => {
                let rel = p - *center;
                let ang = rel.y.atan2(rel.x);
                let local = wrap_angle(ang - *start_angle);
                let clamped = local.clamp(0.0, *span);
                let s = clamped * *radius;
                let (cp, heading) = self.pose_at(s);
                let lateral = (p - cp).dot(pt(heading.cos(), heading.sin()).perp());
                (s, lateral, p.dist(cp))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lane {
    Left,
    Right,
}

impl Lane {
    pub fn other(self) -> Lane {
        match self {
            Lane::Left => Lane::Right,
            Lane::Right => Lane::Left,
        }
    }

    /// Signed lateral offset of the lane center from the road centerline.
    pub fn offset(self, lane_width: f64) -> f64 {
        match self {
            Lane::Left => 0.5 * lane_width,
            Lane::Right => -0.5 * lane_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackObstacle {
    /// (x, y, heading) of the box center.
    pub pose: (f64, f64, f64),
    pub length: f64,
    pub width: f64,
    pub lane: Lane,
    /// Arc-length station from the start pose (m).
    pub s: f64,
}

impl TrackObstacle {
    pub fn rect(&self) -> OrientedRect {
        OrientedRect {
            center: pt(self.pose.0, self.pose.1),
            heading: self.pose.2,
            length: self.length,
            width: self.width,
        }
    }

    pub fn polygon(&self) -> ObstaclePolygon {
        ObstaclePolygon::from_rect(&self.rect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub seed: u64,
    pub primitives: Vec<TrackPrimitive>,
    pub lane_width: f64,
    pub boundary_buffer: f64,
    pub obstacles: Vec<TrackObstacle>,
}

impl TrackSpec {
    pub fn total_length(&self) -> f64 {
        self.primitives.iter().map(|p| p.length()).sum()
    }

    pub fn n_turns(&self) -> usize {
        self.primitives.iter().filter(|p| matches!(p, TrackPrimitive::Arc { .. })).count()
    }

    /// Road half-width (two lanes).
    pub fn road_half_width(&self) -> f64 {
        self.lane_width
    }

    /// Centerline pose at station `s` (wraps around the loop).
    pub fn pose_at(&self, s: f64) -> (Point2, f64) {
        let total = self.total_length();
        let mut s = s.rem_euclid(total);
        for prim in &self.primitives {
            if s <= prim.length() {
                return prim.pose_at(s);
            }
            s -= prim.length();
        }
        self.primitives[0].pose_at(0.0)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        let total = self.total_length();
        let mut s = s.rem_euclid(total);
        for prim in &self.primitives {
            if s <= prim.length() {
                return prim.curvature();
            }
            s -= prim.length();
        }
        0.0
    }

    /// Lane-center pose at station `s`.
    pub fn lane_pose_at(&self, s: f64, lane: Lane) -> (Point2, f64) {
        let (p, heading) = self.pose_at(s);
        let left = pt(heading.cos(), heading.sin()).perp();
        (p + left * lane.offset(self.lane_width), heading)
    }

    /// Project a point onto the centerline: (station, lateral offset to the
    /// left of travel).
    pub fn project(&self, p: Point2) -> (f64, f64) {
        let mut best = (0.0, 0.0, f64::INFINITY);
        let mut acc = 0.0;
        for prim in &self.primitives {
            let (s_local, lateral, dist) = prim.project(p);
            if dist < best.2 {
                best = (acc + s_local, lateral, dist);
            }
            acc += prim.length();
        }
        (best.0, best.1)
    }

    /// Lane containing a point (by lateral sign).
    pub fn lane_of(&self, p: Point2) -> Lane {
        let (_, lateral) = self.project(p);
        if lateral >= 0.0 {
            Lane::Left
        } else {
            Lane::Right
        }
    }

    /// True when the point lies on the paved road.
    pub fn on_road(&self, p: Point2) -> bool {
        let (_, lateral) = self.project(p);
        lateral.abs() <= self.road_half_width()
    }

    /// True when the point lies beyond the boundary strips entirely.
    pub fn beyond_outer_boundary(&self, p: Point2) -> bool {
        let (_, lateral) = self.project(p);
        lateral.abs() > self.road_half_width() + self.boundary_buffer
    }

    /// Start pose: station 0 in the left lane.
    pub fn start_pose(&self) -> (Point2, f64) {
        self.lane_pose_at(0.0, Lane::Left)
    }

    pub fn obstacle_polygons(&self) -> Vec<ObstaclePolygon> {
        self.obstacles.iter().map(|o| o.polygon()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<TrackSpec> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Deterministically generate a closed test track meeting the configured
/// statistics: a rounded convex polygon with `turns` corners, scaled to the
/// target length, with obstacles spaced along the road.
pub fn generate_track(seed: u64, cfg: &TrackConfig) -> Result<TrackSpec> {
    let mut rng = child_rng(seed, "track", 0);
    let r_min = 1.0 / cfg.curvature[1];
    let r_max = 1.0 / cfg.curvature[0];

    'attempt: for _attempt in 0..500 {
        // convex corner layout: jittered points on a circle
        let n = cfg.turns;
        let base_r = cfg.length / std::f64::consts::TAU;
        let mut angles: Vec<f64> = (0..n)
            .map(|i| {
                std::f64::consts::TAU * (i as f64 + rng.gen_range(0.15..0.85)) / n as f64
            })
            .collect();
        angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let verts: Vec<Point2> = angles
            .iter()
            .map(|&a| pt(a.cos(), a.sin()) * (base_r * rng.gen_range(0.8..1.2)))
            .collect();
        if convex_hull(&verts).len() != n {
            continue 'attempt;
        }

        // corner turn angles and edge lengths
        let edge = |i: usize| verts[(i + 1) % n] - verts[i];
        let mut turn = vec![0.0; n];
        for i in 0..n {
            let d_in = edge((i + n - 1) % n).unit();
            let d_out = edge(i).unit();
            let ang = d_in.cross(d_out).atan2(d_in.dot(d_out));
            if ang <= 0.0 {
                continue 'attempt;
            }
            turn[i] = ang;
        }

        // corner radii within the curvature band, feasible for both edges
        let mut radii = vec![0.0; n];
        for i in 0..n {
            let e_in = edge((i + n - 1) % n).norm();
            let e_out = edge(i).norm();
            let r_fit = 0.45 * e_in.min(e_out) / (turn[i] / 2.0).tan();
            let hi = r_fit.min(r_max * 0.9);
            if hi < r_min {
                continue 'attempt;
            }
            radii[i] = rng.gen_range(r_min..=hi.min(r_min * 4.0).max(r_min + 1.0));
        }

        // scale vertices so total length hits the target exactly
        let perimeter: f64 = (0..n).map(|i| edge(i).norm()).sum();
        let cuts: f64 = (0..n).map(|i| radii[i] * (turn[i] / 2.0).tan()).sum();
        let arcs_len: f64 = (0..n).map(|i| radii[i] * turn[i]).sum();
        let scale = (cfg.length - arcs_len + 2.0 * cuts) / perimeter;
        if scale <= 0.0 {
            continue 'attempt;
        }
        let verts: Vec<Point2> = verts.iter().map(|&v| v * scale).collect();
        let edge = |i: usize| verts[(i + 1) % n] - verts[i];
        for i in 0..n {
            let t_in = radii[i] * (turn[i] / 2.0).tan();
            let t_out = radii[(i + 1) % n] * (turn[(i + 1) % n] / 2.0).tan();
            if edge(i).norm() - t_in - t_out < 8.0 {
                continue 'attempt; // straights must keep usable length
            }
        }

        // assemble primitives: arc at each corner, straight along each edge
        let mut prims: Vec<TrackPrimitive> = Vec::with_capacity(2 * n);
        for i in 0..n {
            let d_in = edge((i + n - 1) % n).unit();
            let d_out = edge(i).unit();
            let t = radii[i] * (turn[i] / 2.0).tan();
            let p1 = verts[i] - d_in * t;
            let center = p1 + d_in.perp() * radii[i];
            let start_angle = {
                let rel = p1 - center;
                rel.y.atan2(rel.x)
            };
            prims.push(TrackPrimitive::Arc {
                center,
                radius: radii[i],
                start_angle,
                span: turn[i],
            });
            let t_next = radii[(i + 1) % n] * (turn[(i + 1) % n] / 2.0).tan();
            let s_start = verts[i] + d_out * t;
            let s_len = edge(i).norm() - t - t_next;
            prims.push(TrackPrimitive::Straight { start: s_start, dir: d_out, length: s_len });
        }

        // rotate the chain so the loop starts on the straight after the
        // northwest-most corner
        let nw = (0..n)
            .max_by(|&a, &b| {
                let pa = verts[a];
                let pb = verts[b];
                (pa.y - pa.x).partial_cmp(&(pb.y - pb.x)).unwrap()
            })
            .unwrap();
        prims.rotate_left(2 * nw + 1);

        let mut spec = TrackSpec {
            seed,
            primitives: prims,
            lane_width: cfg.lane_width,
            boundary_buffer: cfg.boundary_buffer,
            obstacles: Vec::new(),
        };
        let total = spec.total_length();
        if (total - cfg.length).abs() > cfg.length_tol * cfg.length {
            continue 'attempt;
        }

        // obstacles along the road with the configured spacing band
        let margin_end = 30.0;
        let mut stations: Vec<f64> = Vec::new();
        for _ in 0..500 {
            stations.clear();
            let mut s = cfg.first_obstacle + rng.gen_range(0.0..5.0);
            for _ in 0..cfg.n_obstacles {
                stations.push(s);
                s += rng.gen_range(cfg.spacing[0]..=cfg.spacing[1]);
            }
            if stations.last().copied().unwrap_or(0.0) <= total - margin_end {
                break;
            }
        }
        if stations.len() != cfg.n_obstacles
            || stations.last().copied().unwrap_or(f64::INFINITY) > total - margin_end
        {
            return Err(Error::Config(
                "track: obstacle spacing band does not fit the track length".into(),
            ));
        }
        for s in stations {
            let lane = if rng.gen::<bool>() { Lane::Left } else { Lane::Right };
            let (p, heading) = spec.lane_pose_at(s, lane);
            spec.obstacles.push(TrackObstacle {
                pose: (p.x, p.y, heading),
                length: rng.gen_range(cfg.obstacle_length[0]..=cfg.obstacle_length[1]),
                width: rng.gen_range(cfg.obstacle_width[0]..=cfg.obstacle_width[1]),
                lane,
                s,
            });
        }
        return Ok(spec);
    }
    Err(Error::Config("track generation failed for this seed/config".into()))
}

/// Boundary strips flanking the road: one polygon per centerline primitive
/// per side, `buffer` wide, directly outside the road edge. Together they
/// ring the whole loop.
pub fn road_boundary_obstacles(spec: &TrackSpec, strip_step: f64) -> Vec<ObstaclePolygon> {
    let half = spec.road_half_width();
    let buffer = spec.boundary_buffer;
    let mut out = Vec::new();
    let mut acc = 0.0;
    for prim in &spec.primitives {
        let len = prim.length();
        for (near, far) in [(half, half + buffer), (-half, -half - buffer)] {
            let n_steps = ((len / strip_step).ceil() as usize).max(1);
            let mut near_side: Vec<Point2> = Vec::with_capacity(n_steps + 1);
            let mut far_side: Vec<Point2> = Vec::with_capacity(n_steps + 1);
            for i in 0..=n_steps {
                let s = len * i as f64 / n_steps as f64;
                let (p, heading) = prim.pose_at(s);
                let left = pt(heading.cos(), heading.sin()).perp();
                near_side.push(p + left * near);
                far_side.push(p + left * far);
            }
            far_side.reverse();
            near_side.extend(far_side);
            let mut poly = Polygon::new(near_side);
            if !poly.is_ccw() {
                poly.vertices.reverse();
            }
            out.push(ObstaclePolygon { polygon: poly, is_static: true });
        }
        acc += len;
    }
    let _ = acc;
    out
}

/// Indices of obstacles with any vertex within `d_sense` of the pose.
pub fn sensor_scan(obstacles: &[ObstaclePolygon], position: Point2, d_sense: f64) -> Vec<usize> {
    obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| o.polygon.vertices.iter().any(|v| v.dist(position) <= d_sense))
        .map(|(i, _)| i)
        .collect()
}

/// Persistent obstacle memory: obstacles never vanish once sensed.
#[derive(Debug, Clone, Default)]
pub struct ObstacleMemory {
    seen: BTreeSet<usize>,
}

impl ObstacleMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, visible: &[usize]) {
        self.seen.extend(visible.iter().copied());
    }

    pub fn seen(&self) -> impl Iterator<Item = usize> + '_ {
        self.seen.iter().copied()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.seen.contains(&idx)
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrackConfig;

    fn cfg() -> TrackConfig {
        TrackConfig::default()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_track(1, &cfg()).unwrap();
        let b = generate_track(1, &cfg()).unwrap();
        assert_eq!(a, b);
        let c = generate_track(2, &cfg()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn band_checks_over_many_seeds() {
        let cfg = cfg();
        for seed in 0..100 {
            let t = generate_track(seed, &cfg).unwrap();
            let len = t.total_length();
            assert!(
                (len - cfg.length).abs() <= cfg.length_tol * cfg.length,
                "seed {seed}: length {len}"
            );
            assert_eq!(t.n_turns(), cfg.turns, "seed {seed}");
            for p in &t.primitives {
                if let TrackPrimitive::Arc { radius, span, .. } = p {
                    let k = 1.0 / radius;
                    assert!(
                        k >= cfg.curvature[0] - 1e-12 && k <= cfg.curvature[1] + 1e-12,
                        "seed {seed}: curvature {k}"
                    );
                    assert!(*span > 0.0, "left turns only on a ccw loop");
                }
            }
            assert_eq!(t.obstacles.len(), cfg.n_obstacles);
            let mut prev = 0.0;
            for (i, o) in t.obstacles.iter().enumerate() {
                assert!(o.length >= cfg.obstacle_length[0] && o.length <= cfg.obstacle_length[1]);
                assert!(o.width >= cfg.obstacle_width[0] && o.width <= cfg.obstacle_width[1]);
                if i == 0 {
                    assert!(o.s >= cfg.first_obstacle, "seed {seed}: first at {}", o.s);
                } else {
                    let gap = o.s - prev;
                    assert!(
                        gap >= cfg.spacing[0] - 1e-9 && gap <= cfg.spacing[1] + 1e-9,
                        "seed {seed}: gap {gap}"
                    );
                }
                prev = o.s;
            }
        }
    }

    #[test]
    fn centerline_is_continuous_and_closed() {
        let t = generate_track(3, &cfg()).unwrap();
        let total = t.total_length();
        // adjacent primitives join smoothly
        let mut acc = 0.0;
        for prim in &t.primitives {
            let (p_end, h_end) = prim.pose_at(prim.length());
            acc += prim.length();
            let (p_next, h_next) = t.pose_at(acc);
            assert!(p_end.dist(p_next) < 1e-6, "gap {}", p_end.dist(p_next));
            assert!(wrap_angle(h_end - h_next).abs() < 1e-6);
        }
        // loop closes
        let (p0, h0) = t.pose_at(0.0);
        let (p1, h1) = t.pose_at(total);
        assert!(p0.dist(p1) < 1e-6);
        assert!(wrap_angle(h0 - h1).abs() < 1e-6);
    }

    #[test]
    fn projection_inverts_pose_at() {
        let t = generate_track(4, &cfg()).unwrap();
        let total = t.total_length();
        for i in 0..200 {
            let s = total * i as f64 / 200.0;
            let (p, heading) = t.pose_at(s);
            let left = pt(heading.cos(), heading.sin()).perp();
            let probe = p + left * 1.7;
            let (s_hat, lat) = t.project(probe);
            let (p_hat, _) = t.pose_at(s_hat);
            assert!(p_hat.dist(p) < 0.6, "station error at s={s}: {}", p_hat.dist(p));
            assert!((lat - 1.7).abs() < 0.05, "lateral {lat}");
        }
    }

    #[test]
    fn obstacles_sit_in_lane_centers() {
        let t = generate_track(5, &cfg()).unwrap();
        for o in &t.obstacles {
            let (_, lateral) = t.project(pt(o.pose.0, o.pose.1));
            let expect = o.lane.offset(t.lane_width);
            assert!((lateral - expect).abs() < 0.2, "lateral {lateral} vs {expect}");
        }
    }

    #[test]
    fn boundary_strips_stay_off_the_road() {
        use rand::Rng;
        let t = generate_track(6, &cfg()).unwrap();
        let strips = road_boundary_obstacles(&t, 4.0);
        assert_eq!(strips.len(), 2 * t.primitives.len());
        let mut rng = crate::rng::child_rng(6, "strip-probe", 0);
        let total = t.total_length();
        let mut checked = 0;
        for _ in 0..10_000 {
            let s = rng.gen_range(0.0..total);
            let lat = rng.gen_range(-t.road_half_width() * 0.98..t.road_half_width() * 0.98);
            let (p, heading) = t.pose_at(s);
            let left = pt(heading.cos(), heading.sin()).perp();
            let probe = p + left * lat;
            // skip probes whose nearest-centerline lateral differs (deep
            // inside corner cut regions)
            let (_, lat_hat) = t.project(probe);
            if (lat_hat - lat).abs() > 0.05 {
                continue;
            }
            checked += 1;
            for strip in &strips {
                assert!(!strip.polygon.contains(probe), "strip covers road point {probe:?}");
            }
        }
        assert!(checked > 8000, "only {checked} probes checked");
    }

    #[test]
    fn boundary_strips_ring_the_loop() {
        let t = generate_track(7, &cfg()).unwrap();
        let strips = road_boundary_obstacles(&t, 4.0);
        // every strip end meets the next strip on the same side
        let total = t.total_length();
        for probe_i in 0..100 {
            let s = total * probe_i as f64 / 100.0;
            let (p, heading) = t.pose_at(s);
            let left = pt(heading.cos(), heading.sin()).perp();
            for side in [1.0, -1.0] {
                let probe = p + left * (side * (t.road_half_width() + 0.5 * t.boundary_buffer));
                let covered = strips.iter().any(|st| st.polygon.contains(probe));
                assert!(covered, "boundary gap at s={s} side {side}");
            }
        }
    }

    #[test]
    fn sensing_and_memory() {
        let t = generate_track(8, &cfg()).unwrap();
        let obstacles = t.obstacle_polygons();
        let first = &t.obstacles[0];
        let (p_near, _) = t.lane_pose_at(first.s - 40.0, first.lane);

        assert!(sensor_scan(&obstacles, p_near, 0.0).is_empty());
        let seen42 = sensor_scan(&obstacles, p_near, 42.4);
        assert!(seen42.contains(&0), "obstacle 40 m ahead visible at 42.4 m");

        let mut memory = ObstacleMemory::new();
        memory.update(&seen42);
        // move far away: memory persists
        let (p_far, _) = t.lane_pose_at(first.s + 400.0, Lane::Left);
        let now = sensor_scan(&obstacles, p_far, 42.4);
        assert!(!now.contains(&0));
        memory.update(&now);
        assert!(memory.contains(0));
    }

    #[test]
    fn track_file_round_trip_is_exact() {
        let t = generate_track(9, &cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.json");
        t.save(&path).unwrap();
        let back = TrackSpec::load(&path).unwrap();
        assert_eq!(t, back);
    }
}
