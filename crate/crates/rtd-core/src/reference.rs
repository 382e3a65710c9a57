//! Desired trajectories: the two-state trajectory-producing model, its
//! closed-form solution (a rigid rotation/translation field), the
//! disturbance-augmented tracking model, and braking references.
//!
//! Plan-local convention throughout: the planning iteration starts with the
//! center of mass at the origin, heading along +x.

use crate::errorfn::ErrorFunction;
use crate::geom::{pt, Point2, Transform2};
use crate::vehicle::VehicleParams;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Trajectory parameter: desired yaw rate and desired longitudinal speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParam {
    /// Desired yaw rate (rad/s).
    pub k1: f64,
    /// Desired longitudinal speed (m/s).
    pub k2: f64,
}

/// Compact parameter box with the per-iteration command-change limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub k1_min: f64,
    pub k1_max: f64,
    pub k2_min: f64,
    pub k2_max: f64,
    /// Max commanded speed change per planning iteration (m/s).
    pub dk2_limit: f64,
    /// Max commanded yaw-rate magnitude (rad/s).
    pub k1_limit: f64,
}

impl ParamBox {
    pub fn for_speed_range(lo: f64, hi: f64, dk2_limit: f64, k1_limit: f64) -> Self {
        ParamBox {
            k1_min: -k1_limit,
            k1_max: k1_limit,
            k2_min: lo,
            k2_max: hi,
            dk2_limit,
            k1_limit,
        }
    }

    pub fn contains(&self, k: TrajectoryParam) -> bool {
        k.k1 >= self.k1_min && k.k1 <= self.k1_max && k.k2 >= self.k2_min && k.k2 <= self.k2_max
    }

    pub fn corners(&self) -> [TrajectoryParam; 4] {
        [
            TrajectoryParam { k1: self.k1_min, k2: self.k2_min },
            TrajectoryParam { k1: self.k1_min, k2: self.k2_max },
            TrajectoryParam { k1: self.k1_max, k2: self.k2_min },
            TrajectoryParam { k1: self.k1_max, k2: self.k2_max },
        ]
    }

    pub fn is_valid(&self) -> bool {
        self.k1_min <= self.k1_max
            && self.k2_min <= self.k2_max
            && self.dk2_limit > 0.0
            && self.k1_limit > 0.0
    }
}

/// Steady-state lateral speed for a parameter, from steady-state linear tire
/// force balance.
pub fn steady_state_vy(k: TrajectoryParam, params: &VehicleParams) -> f64 {
    k.k1 * (params.lr - params.mass * params.lf * k.k2 * k.k2 / (params.cr * (params.lr + params.lf)))
}

/// Closed-form desired trajectory for a parameter: every point of the plane
/// is advected by `zdot = (k2 - k1 (y - y0), vy* + k1 (x - x0))`, a rigid
/// rotation about an implied center (pure translation when k1 = 0).
#[derive(Debug, Clone, Copy)]
pub struct DesiredTrajectory {
    pub k: TrajectoryParam,
    pub vy_star: f64,
    /// Plan-start center of mass.
    pub com0: Point2,
}

impl DesiredTrajectory {
    pub fn new(k: TrajectoryParam, params: &VehicleParams, com0: Point2) -> Self {
        DesiredTrajectory { k, vy_star: steady_state_vy(k, params), com0 }
    }

    /// Rotation center of the advection field (None when k1 = 0).
    pub fn center(&self) -> Option<Point2> {
        if self.k.k1 == 0.0 {
            None
        } else {
            Some(pt(self.com0.x - self.vy_star / self.k.k1, self.com0.y + self.k.k2 / self.k.k1))
        }
    }

    /// Velocity of the field at a point.
    pub fn field(&self, z: Point2) -> Point2 {
        pt(
            self.k.k2 - self.k.k1 * (z.y - self.com0.y),
            self.vy_star + self.k.k1 * (z.x - self.com0.x),
        )
    }

    /// Exact position at time `t` of the point starting at `z0`.
    pub fn point_at(&self, t: f64, z0: Point2) -> Point2 {
        match self.center() {
            None => z0 + pt(self.k.k2, self.vy_star) * t,
            Some(c) => c + (z0 - c).rotated(self.k.k1 * t),
        }
    }

    /// Reference state of the center of mass at time `t`.
    pub fn com_state_at(&self, t: f64) -> ReferencePoint {
        ReferencePoint {
            t,
            pos: self.point_at(t, self.com0),
            heading: self.k.k1 * t,
            vx: self.k.k2,
            vy: self.vy_star,
            omega: self.k.k1,
            ax: 0.0,
        }
    }

    /// Sampled trajectory of the point starting at `z0` over `[0, horizon]`.
    pub fn sample_points(&self, z0: Point2, horizon: f64, dt: f64) -> Vec<(f64, Point2)> {
        let n = (horizon / dt).round() as usize;
        (0..=n).map(|i| (i as f64 * dt, self.point_at(i as f64 * dt, z0))).collect()
    }
}

/// Piecewise-constant disturbance on a uniform grid, values in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSignal {
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub grid_dt: f64,
}

impl DisturbanceSignal {
    pub fn constant(dx: f64, dy: f64, horizon: f64, grid_dt: f64) -> Self {
        let n = (horizon / grid_dt).ceil() as usize + 1;
        DisturbanceSignal { dx: vec![dx; n], dy: vec![dy; n], grid_dt }
    }

    /// Extremal bang-bang signal: each cell independently ±1.
    pub fn bang_bang(rng: &mut impl Rng, horizon: f64, grid_dt: f64) -> Self {
        let n = (horizon / grid_dt).ceil() as usize + 1;
        let mut draw = || (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        DisturbanceSignal { dx: draw(), dy: draw(), grid_dt }
    }

    pub fn value_at(&self, t: f64) -> Point2 {
        let i = ((t / self.grid_dt).floor().max(0.0) as usize).min(self.dx.len() - 1);
        pt(self.dx[i], self.dy[i])
    }

    pub fn in_range(&self) -> bool {
        self.dx.iter().chain(self.dy.iter()).all(|v| (-1.0..=1.0).contains(v))
    }
}

/// One RK4 step of the trajectory-tracking model
/// `zdot_i = zdot_des_i(z) + g_i(t) d_i(t)`, with the disturbance held on
/// its grid. Steps should align with the disturbance grid. Rejected when
/// the error function is not defined through `t + dt`.
pub fn tracking_model_step(
    z: Point2,
    des: &DesiredTrajectory,
    d: &DisturbanceSignal,
    g: &ErrorFunction,
    t: f64,
    dt: f64,
) -> crate::Result<Point2> {
    if !g.defined_at(t + dt) {
        return Err(crate::Error::invalid(format!(
            "tracking_model_step: g undefined at t={:.3} (horizon {:.3})",
            t + dt,
            g.horizon
        )));
    }
    let dval = d.value_at(t + 0.5 * dt);
    let f = |tt: f64, p: Point2| {
        let base = des.field(p);
        pt(base.x + g.gx(tt) * dval.x, base.y + g.gy(tt) * dval.y)
    };
    let k1 = f(t, z);
    let k2 = f(t + 0.5 * dt, z + k1 * (0.5 * dt));
    let k3 = f(t + 0.5 * dt, z + k2 * (0.5 * dt));
    let k4 = f(t + dt, z + k3 * dt);
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Roll the tracking model over `[0, horizon]` from `z0`.
pub fn tracking_model_rollout(
    z0: Point2,
    des: &DesiredTrajectory,
    d: &DisturbanceSignal,
    g: &ErrorFunction,
    horizon: f64,
    dt: f64,
) -> Vec<(f64, Point2)> {
    assert!(g.defined_at(horizon), "error function must cover the horizon");
    let n = (horizon / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut z = z0;
    out.push((0.0, z));
    for i in 0..n {
        z = tracking_model_step(z, des, d, g, i as f64 * dt, dt)
            .expect("horizon checked above");
        out.push(((i + 1) as f64 * dt, z));
    }
    out
}

/// A pose-and-speed reference sample for the tracking controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub t: f64,
    pub pos: Point2,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    /// Longitudinal acceleration feedforward (m/s^2).
    pub ax: f64,
}

/// Uniformly sampled reference trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    pub points: Vec<ReferencePoint>,
    pub dt: f64,
}

impl ReferenceTrajectory {
    pub fn point_at(&self, t: f64) -> ReferencePoint {
        let i = ((t / self.dt).round().max(0.0) as usize).min(self.points.len() - 1);
        self.points[i]
    }

    pub fn duration(&self) -> f64 {
        self.points.last().map(|p| p.t).unwrap_or(0.0)
    }

    /// Final commanded speed.
    pub fn terminal_speed(&self) -> f64 {
        self.points.last().map(|p| p.vx).unwrap_or(0.0)
    }

    /// Map every sample through a rigid transform (plan frame -> world).
    pub fn transformed(&self, tf: &Transform2) -> ReferenceTrajectory {
        ReferenceTrajectory {
            points: self
                .points
                .iter()
                .map(|p| ReferencePoint {
                    pos: tf.apply(p.pos),
                    heading: tf.apply_heading(p.heading),
                    ..*p
                })
                .collect(),
            dt: self.dt,
        }
    }
}

/// Constant-parameter reference over `[0, duration]` (plan frame).
pub fn tracking_reference(
    k: TrajectoryParam,
    params: &VehicleParams,
    duration: f64,
    dt: f64,
) -> ReferenceTrajectory {
    let des = DesiredTrajectory::new(k, params, pt(0.0, 0.0));
    let n = (duration / dt).round() as usize;
    let points = (0..=n).map(|i| des.com_state_at(i as f64 * dt)).collect();
    ReferenceTrajectory { points, dt }
}

/// Reference that follows `k` until `t_start`, then ramps the commanded
/// speed to zero at `a_max` while holding the commanded curvature
/// `k1 / k2`. The reference extends past the stop with a short held tail so
/// controllers always have a lookahead window.
pub fn braking_reference(
    k: TrajectoryParam,
    t_start: f64,
    params: &VehicleParams,
    a_max: f64,
    dt: f64,
) -> ReferenceTrajectory {
    let des = DesiredTrajectory::new(k, params, pt(0.0, 0.0));
    let curvature = if k.k2.abs() > 1e-9 { k.k1 / k.k2 } else { 0.0 };
    let ramp = if k.k2 > 0.0 { k.k2 / a_max } else { 0.0 };
    let tail = 1.0;
    let total = t_start + ramp + tail;
    let n = (total / dt).round() as usize;

    let mut points = Vec::with_capacity(n + 1);
    // tracking phase: exact
    let n_track = (t_start / dt).floor() as usize;
    for i in 0..=n_track.min(n) {
        points.push(des.com_state_at(i as f64 * dt));
    }
    // braking phase: integrate the ramped pose
    let start = *points.last().expect("tracking phase nonempty");
    let mut x = start.pos.x;
    let mut y = start.pos.y;
    let mut heading = start.heading;
    let speed_at = |t: f64| (k.k2 - a_max * (t - t_start)).max(0.0);
    for i in (n_track + 1)..=n {
        let t0 = (i - 1) as f64 * dt;
        let f = |tt: f64, th: f64| {
            let v = speed_at(tt);
            let om = curvature * v;
            let vy = steady_state_vy(TrajectoryParam { k1: om, k2: v }, params);
            let (s, c) = th.sin_cos();
            (v * c - vy * s, v * s + vy * c, om)
        };
        let (k1x, k1y, k1h) = f(t0, heading);
        let (k2x, k2y, k2h) = f(t0 + 0.5 * dt, heading + 0.5 * dt * k1h);
        let (k3x, k3y, k3h) = f(t0 + 0.5 * dt, heading + 0.5 * dt * k2h);
        let (k4x, k4y, k4h) = f(t0 + dt, heading + dt * k3h);
        x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        heading += dt / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h);
        let t = i as f64 * dt;
        let v = speed_at(t);
        let om = curvature * v;
        points.push(ReferencePoint {
            t,
            pos: pt(x, y),
            heading,
            vx: v,
            vy: steady_state_vy(TrajectoryParam { k1: om, k2: v }, params),
            omega: om,
            ax: if v > 0.0 { -a_max } else { 0.0 },
        });
    }
    ReferenceTrajectory { points, dt }
}

/// Arc length of a sampled reference.
pub fn reference_arc_length(r: &ReferenceTrajectory) -> f64 {
    r.points.windows(2).map(|w| w[0].pos.dist(w[1].pos)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use crate::vehicle::VehicleParams;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn params() -> VehicleParams {
        VehicleParams::from_config(&Config::default().vehicle).unwrap()
    }

    #[test]
    fn vy_star_is_linear_in_k1() {
        let p = params();
        assert_eq!(steady_state_vy(TrajectoryParam { k1: 0.0, k2: 10.0 }, &p), 0.0);
        let v1 = steady_state_vy(TrajectoryParam { k1: 0.1, k2: 10.0 }, &p);
        let v2 = steady_state_vy(TrajectoryParam { k1: 0.2, k2: 10.0 }, &p);
        assert_relative_eq!(v2, 2.0 * v1, max_relative = 1e-12);
    }

    #[test]
    fn vy_star_root_speed_zeroes_lateral_speed() {
        let p = params();
        let root = (p.lr * p.cr * (p.lr + p.lf) / (p.mass * p.lf)).sqrt();
        for k1 in [-0.2, 0.1, 0.25] {
            let v = steady_state_vy(TrajectoryParam { k1, k2: root }, &p);
            assert!(v.abs() < 1e-9, "vy* at root speed: {v}");
        }
    }

    #[test]
    fn vy_star_matches_hand_evaluation() {
        let p = params();
        let k = TrajectoryParam { k1: 0.28, k2: 10.0 };
        let by_hand = 0.28 * (p.lr - p.mass * p.lf * 100.0 / (p.cr * (p.lr + p.lf)));
        assert_relative_eq!(steady_state_vy(k, &p), by_hand, max_relative = 1e-15);
    }

    #[test]
    fn straight_trajectory_endpoint() {
        let p = params();
        let des = DesiredTrajectory::new(TrajectoryParam { k1: 0.0, k2: 12.0 }, &p, pt(0.0, 0.0));
        let end = des.point_at(2.1, pt(0.0, 0.0));
        assert_relative_eq!(end.x, 25.2, max_relative = 1e-12);
        assert_relative_eq!(end.y, 0.0);
    }

    #[test]
    fn circle_invariant_holds() {
        let p = params();
        let mut rng = crate::rng::child_rng(5, "circle", 0);
        for _ in 0..1000 {
            let k = TrajectoryParam {
                k1: rng.gen_range(0.01..0.25) * if rng.gen::<bool>() { 1.0 } else { -1.0 },
                k2: rng.gen_range(3.0..15.0),
            };
            let z0 = pt(rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0));
            let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
            let c = des.center().unwrap();
            let r0 = z0.dist(c);
            for i in 0..40 {
                let z = des.point_at(i as f64 * 0.05, z0);
                assert!((z.dist(c) - r0).abs() < 1e-9);
            }
            // the center-of-mass circle has the closed-form radius
            let r_com = (k.k2 * k.k2 + des.vy_star * des.vy_star).sqrt() / k.k1.abs();
            assert_relative_eq!(des.com0.dist(c), r_com, max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_fine_rk4_of_the_field() {
        let p = params();
        let k = TrajectoryParam { k1: 0.28, k2: 10.0 };
        let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
        let z0 = pt(2.4, 1.0); // a footprint corner
        let dt = 1e-4;
        let mut z = z0;
        let mut t = 0.0;
        while t < 2.0 - 0.5 * dt {
            let f = |pah: Point2| des.field(pah);
            let k1 = f(z);
            let k2 = f(z + k1 * (0.5 * dt));
            let k3 = f(z + k2 * (0.5 * dt));
            let k4 = f(z + k3 * dt);
            z = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            t += dt;
        }
        let exact = des.point_at(t, z0);
        assert!(z.dist(exact) < 1e-6, "rk4 vs closed form: {}", z.dist(exact));
    }

    #[test]
    fn rigid_body_pairwise_distances_preserved() {
        let p = params();
        let mut rng = crate::rng::child_rng(6, "rigid", 0);
        for _ in 0..200 {
            let k = TrajectoryParam {
                k1: rng.gen_range(-0.25..0.25),
                k2: rng.gen_range(3.0..15.0),
            };
            let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
            let corners = crate::vehicle::footprint_corner_offsets(&p);
            let t = rng.gen_range(0.0..2.5);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let d0 = corners[i].dist(corners[j]);
                    let dt_ = des.point_at(t, corners[i]).dist(des.point_at(t, corners[j]));
                    assert!((d0 - dt_).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_g_tracking_model_reduces_to_desired() {
        let p = params();
        let g = ErrorFunction::zero((9.0, 11.0));
        let k = TrajectoryParam { k1: 0.15, k2: 10.0 };
        let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
        let d = DisturbanceSignal::constant(1.0, -1.0, 2.0, 0.05);
        let roll = tracking_model_rollout(pt(1.0, 0.5), &des, &d, &g, 2.0, 0.01);
        for (t, z) in roll {
            let exact = des.point_at(t, pt(1.0, 0.5));
            assert!(z.dist(exact) < 1e-9);
        }
    }

    #[test]
    fn disturbance_sign_symmetry_for_straight_parameter() {
        let p = params();
        let g = ErrorFunction::from_coeffs((9.0, 11.0), [0.05, 0.01, 0.0], [0.05, 0.01, 0.0], 2.0);
        let k = TrajectoryParam { k1: 0.0, k2: 10.0 };
        let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
        let plus = DisturbanceSignal::constant(1.0, 1.0, 2.0, 0.05);
        let minus = DisturbanceSignal::constant(-1.0, -1.0, 2.0, 0.05);
        let a = tracking_model_rollout(pt(0.0, 0.0), &des, &plus, &g, 2.0, 0.01);
        let b = tracking_model_rollout(pt(0.0, 0.0), &des, &minus, &g, 2.0, 0.01);
        for ((t, za), (_, zb)) in a.iter().zip(b.iter()) {
            let mid = des.point_at(*t, pt(0.0, 0.0));
            assert!((za.x - mid.x) + (zb.x - mid.x) < 1e-9);
            assert!(((za.y - mid.y) + (zb.y - mid.y)).abs() < 1e-9);
        }
    }

    #[test]
    fn bang_bang_endpoint_within_quadrature_of_g() {
        let p = params();
        let g = ErrorFunction::from_coeffs((9.0, 11.0), [0.08, 0.02, 0.01], [0.06, 0.03, 0.0], 2.0);
        let k = TrajectoryParam { k1: 0.0, k2: 10.0 }; // straight: componentwise bound is exact
        let des = DesiredTrajectory::new(k, &p, pt(0.0, 0.0));
        let mut rng = crate::rng::child_rng(9, "bang", 0);
        for trial in 0..50 {
            let d = DisturbanceSignal::bang_bang(&mut rng, 2.0, 0.05);
            let roll = tracking_model_rollout(pt(0.0, 0.0), &des, &d, &g, 2.0, 0.01);
            let (t_end, z_end) = *roll.last().unwrap();
            let desired = des.point_at(t_end, pt(0.0, 0.0));
            let bound_x = g.integral_gx(t_end) + 1e-9;
            let bound_y = g.integral_gy(t_end) + 1e-9;
            assert!(
                (z_end.x - desired.x).abs() <= bound_x,
                "trial {trial}: x deviation {} > {bound_x}",
                (z_end.x - desired.x).abs()
            );
            assert!((z_end.y - desired.y).abs() <= bound_y);
        }
    }

    #[test]
    fn braking_segment_arc_length_matches_kinematics() {
        let p = params();
        let k = TrajectoryParam { k1: 0.0, k2: 11.0 };
        let full = braking_reference(k, 1.0, &p, 4.0, 0.001);
        let track_only = tracking_reference(k, &p, 1.0, 0.001);
        let brake_len = reference_arc_length(&full) - reference_arc_length(&track_only);
        assert_relative_eq!(brake_len, 11.0 * 11.0 / (2.0 * 4.0), max_relative = 1e-4);
        assert_eq!(full.terminal_speed(), 0.0);
    }

    #[test]
    fn braking_from_zero_speed_adds_no_length() {
        let p = params();
        let k = TrajectoryParam { k1: 0.0, k2: 0.0 };
        let r = braking_reference(k, 0.5, &p, 4.0, 0.01);
        assert!(reference_arc_length(&r) < 1e-12);
        assert_eq!(r.terminal_speed(), 0.0);
    }
}
