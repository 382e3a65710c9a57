//! High-fidelity bicycle model: six center-of-mass states driven by a
//! simplified Pacejka lateral tire model and quadratic input-to-force maps.
//!
//! The same right-hand side backs three roles: prediction inside the
//! planner, the tracking controller's design model, and (with perturbed
//! parameters plus actuator lag) the virtual plant that stands in for a
//! proprietary vehicle simulator.

mod controller;
mod plant;

pub use controller::TrackingController;
pub use plant::{
    measure_prediction_error, measure_stopping_distance, PerturbationDraw, Plant,
    PredictionErrorBound,
};

use crate::config::{ActuatorConfig, VehicleConfig};
use crate::geom::{pt, OrientedRect, Point2};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Physical vehicle parameters. `bf`/`br` are derived so the small-slip
/// slope of the lateral force curve equals the configured cornering
/// stiffness: `C = shape * B * D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub lf: f64,
    pub lr: f64,
    pub cf: f64,
    pub cr: f64,
    pub bf: f64,
    pub br: f64,
    pub df: f64,
    pub dr: f64,
    pub pacejka_shape: f64,
    pub footprint_length: f64,
    pub footprint_width: f64,
    pub v_max: f64,
    pub vx_floor: f64,
}

impl VehicleParams {
    pub fn from_config(cfg: &VehicleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(VehicleParams {
            mass: cfg.mass,
            yaw_inertia: cfg.yaw_inertia,
            lf: cfg.lf,
            lr: cfg.lr,
            cf: cfg.cf,
            cr: cfg.cr,
            bf: cfg.cf / (cfg.pacejka_shape * cfg.df),
            br: cfg.cr / (cfg.pacejka_shape * cfg.dr),
            df: cfg.df,
            dr: cfg.dr,
            pacejka_shape: cfg.pacejka_shape,
            footprint_length: cfg.footprint_length,
            footprint_width: cfg.footprint_width,
            v_max: cfg.v_max,
            vx_floor: cfg.vx_floor,
        })
    }

    fn is_finite(&self) -> bool {
        [
            self.mass,
            self.yaw_inertia,
            self.lf,
            self.lr,
            self.cf,
            self.cr,
            self.bf,
            self.br,
            self.df,
            self.dr,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Center-of-mass state: position, heading, body-frame speeds, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn at_speed(v: f64) -> Self {
        VehicleState { vx: v, ..Default::default() }
    }

    pub fn position(&self) -> Point2 {
        pt(self.x, self.y)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.theta, self.vx, self.vy, self.omega]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        VehicleState { x: a[0], y: a[1], theta: a[2], vx: a[3], vy: a[4], omega: a[5] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// World-frame velocity of a body point given by its body-frame offset
    /// from the center of mass.
    pub fn body_point_velocity(&self, local: Point2) -> Point2 {
        let world_offset = local.rotated(self.theta);
        let com_vel = pt(self.vx, self.vy).rotated(self.theta);
        com_vel + world_offset.perp() * self.omega
    }

    pub fn body_point(&self, local: Point2) -> Point2 {
        self.position() + local.rotated(self.theta)
    }
}

/// Raw driver-style inputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Normalized throttle in [0, 1].
    pub throttle: f64,
    /// Normalized brake master-cylinder pressure in [0, 1].
    pub brake_pressure: f64,
    /// Steering wheel angle (rad).
    pub steering_wheel_angle: f64,
}

impl ControlInput {
    pub fn clamped(&self, act: &ActuatorMap) -> ControlInput {
        ControlInput {
            throttle: self.throttle.clamp(0.0, 1.0),
            brake_pressure: self.brake_pressure.clamp(0.0, 1.0),
            steering_wheel_angle: self
                .steering_wheel_angle
                .clamp(-act.steer_wheel_limit, act.steer_wheel_limit),
        }
    }

    fn is_finite(&self) -> bool {
        self.throttle.is_finite()
            && self.brake_pressure.is_finite()
            && self.steering_wheel_angle.is_finite()
    }
}

/// Quadratic input-to-force maps plus the steering ratio and input lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorMap {
    pub drive_gain: [f64; 2],
    pub drag_poly: [f64; 3],
    pub brake_poly: [f64; 2],
    pub steer_ratio: f64,
    pub steer_wheel_limit: f64,
    pub lag_tau: f64,
}

impl ActuatorMap {
    pub fn from_config(cfg: &ActuatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ActuatorMap {
            drive_gain: cfg.drive_gain,
            drag_poly: cfg.drag_poly,
            brake_poly: cfg.brake_poly,
            steer_ratio: cfg.steer_ratio,
            steer_wheel_limit: cfg.steer_wheel_limit,
            lag_tau: cfg.lag_tau,
        })
    }

    /// Drive force at a throttle setting and longitudinal speed (N).
    pub fn drive_force(&self, throttle: f64, vx: f64) -> f64 {
        throttle * (self.drive_gain[0] + self.drive_gain[1] * vx)
    }

    /// Passive drag (N), opposing forward motion.
    pub fn drag(&self, vx: f64) -> f64 {
        self.drag_poly[0] + self.drag_poly[1] * vx + self.drag_poly[2] * vx * vx
    }

    /// Braking force magnitude at a pedal pressure (N). Faded linearly below
    /// `fade_speed` so the stopped vehicle is an equilibrium.
    pub fn brake_force(&self, pressure: f64, vx: f64, fade_speed: f64) -> f64 {
        let raw = self.brake_poly[0] * pressure + self.brake_poly[1] * pressure * pressure;
        raw * (vx / fade_speed).clamp(0.0, 1.0)
    }

    /// Net longitudinal force for a full input (N).
    pub fn net_fx(&self, input: ControlInput, vx: f64, fade_speed: f64) -> f64 {
        self.drive_force(input.throttle, vx)
            - self.drag(vx)
            - self.brake_force(input.brake_pressure, vx, fade_speed)
    }

    /// Wheel angle for a steering-wheel angle (rad).
    pub fn wheel_angle(&self, steering_wheel: f64) -> f64 {
        self.steer_ratio * steering_wheel
    }

    /// Invert the force maps: produce pedal inputs realizing a desired net
    /// longitudinal force at speed `vx`, saturating at the actuator limits.
    pub fn invert_fx(&self, fx_desired: f64, vx: f64, fade_speed: f64) -> (f64, f64) {
        let needed = fx_desired + self.drag(vx);
        if needed >= 0.0 {
            let gain = self.drive_gain[0] + self.drive_gain[1] * vx;
            let throttle = if gain > 1.0 { (needed / gain).clamp(0.0, 1.0) } else { 0.0 };
            (throttle, 0.0)
        } else {
            let fade = (vx / fade_speed).clamp(0.0, 1.0);
            if fade < 1e-9 {
                return (0.0, 0.0);
            }
            let target = -needed / fade;
            // solve b1 p^2 + b0 p = target for p >= 0
            let (b0, b1) = (self.brake_poly[0], self.brake_poly[1]);
            let p = if b1.abs() < 1e-12 {
                if b0 > 0.0 {
                    target / b0
                } else {
                    1.0
                }
            } else {
                let disc = b0 * b0 + 4.0 * b1 * target;
                (-b0 + disc.max(0.0).sqrt()) / (2.0 * b1)
            };
            (0.0, p.clamp(0.0, 1.0))
        }
    }

    /// Steering-wheel angle realizing a desired wheel angle, saturated.
    pub fn invert_wheel_angle(&self, delta: f64) -> f64 {
        (delta / self.steer_ratio).clamp(-self.steer_wheel_limit, self.steer_wheel_limit)
    }
}

/// Right-hand side of the six-state bicycle model for explicit forces:
/// net longitudinal force `fx` (N) and wheel angle `delta` (rad).
pub fn derivative_forces(state: &VehicleState, fx: f64, delta: f64, params: &VehicleParams) -> [f64; 6] {
    let v_denom = state.vx.max(params.vx_floor);
    let alpha_f = ((state.vy + params.lf * state.omega) / v_denom).atan() - delta;
    let alpha_r = ((state.vy - params.lr * state.omega) / v_denom).atan();
    let f_fy = -params.df * (params.pacejka_shape * (params.bf * alpha_f).atan()).sin();
    let f_ry = -params.dr * (params.pacejka_shape * (params.br * alpha_r).atan()).sin();

    let (st, ct) = state.theta.sin_cos();
    let (sd, cd) = delta.sin_cos();
    [
        state.vx * ct - state.vy * st,
        state.vx * st + state.vy * ct,
        state.omega,
        fx / params.mass - f_fy * sd / params.mass + state.vy * state.omega,
        f_fy * cd / params.mass + f_ry / params.mass - state.vx * state.omega,
        (params.lf * f_fy * cd - params.lr * f_ry) / params.yaw_inertia,
    ]
}

/// Right-hand side of the six-state bicycle model for driver inputs.
pub fn derivative(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    act: &ActuatorMap,
) -> Result<[f64; 6]> {
    if !state.is_finite() {
        return Err(Error::NonFinite { context: "derivative", detail: format!("state {state:?}") });
    }
    if !params.is_finite() {
        return Err(Error::NonFinite { context: "derivative", detail: "vehicle params".into() });
    }
    if !input.is_finite() {
        return Err(Error::NonFinite { context: "derivative", detail: format!("input {input:?}") });
    }
    let input = input.clamped(act);
    let fx = act.net_fx(input, state.vx, params.vx_floor);
    let delta = act.wheel_angle(input.steering_wheel_angle);
    Ok(derivative_forces(state, fx, delta, params))
}

/// One RK4 step of `ds/dt = f(t, s)` from local time 0; `f` is sampled at
/// the stage times so smooth time-dependent inputs keep fourth order.
fn rk4_step<F>(state: &VehicleState, dt: f64, f: F) -> VehicleState
where
    F: Fn(f64, &VehicleState) -> [f64; 6],
{
    let y = state.to_array();
    let k1 = f(0.0, state);
    let advance = |k: &[f64; 6], h: f64| {
        let mut z = y;
        for i in 0..6 {
            z[i] += h * k[i];
        }
        VehicleState::from_array(z)
    };
    let k2 = f(0.5 * dt, &advance(&k1, 0.5 * dt));
    let k3 = f(0.5 * dt, &advance(&k2, 0.5 * dt));
    let k4 = f(dt, &advance(&k3, dt));
    let mut z = y;
    for i in 0..6 {
        z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let mut out = VehicleState::from_array(z);
    out.vx = out.vx.max(0.0); // the vehicle never reverses
    out
}

/// One fixed RK4 step under a held input.
pub fn step_held_input(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    act: &ActuatorMap,
    dt: f64,
) -> VehicleState {
    let input = input.clamped(act);
    rk4_step(state, dt, |_, s| {
        let fx = act.net_fx(input, s.vx, params.vx_floor);
        let delta = act.wheel_angle(input.steering_wheel_angle);
        derivative_forces(s, fx, delta, params)
    })
}

const STATE_ABORT_LIMIT: f64 = 1e7;

/// Fixed-step RK4 flow of the bicycle model under a time-indexed input
/// schedule. Returns `(t, state)` at every multiple of `dt` through
/// `duration` (rounded to a whole step count).
pub fn integrate<F>(
    state: &VehicleState,
    schedule: F,
    params: &VehicleParams,
    act: &ActuatorMap,
    dt: f64,
    duration: f64,
) -> Result<Vec<(f64, VehicleState)>>
where
    F: Fn(f64) -> ControlInput,
{
    if dt <= 0.0 {
        return Err(Error::invalid("integrate: dt must be > 0"));
    }
    if duration < 0.0 {
        return Err(Error::invalid("integrate: duration must be >= 0"));
    }
    let n_steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut s = *state;
    out.push((0.0, s));
    for i in 0..n_steps {
        let t = i as f64 * dt;
        s = rk4_step(&s, dt, |h, z| {
            let input = schedule(t + h).clamped(act);
            let fx = act.net_fx(input, z.vx, params.vx_floor);
            let delta = act.wheel_angle(input.steering_wheel_angle);
            derivative_forces(z, fx, delta, params)
        });
        if !s.is_finite() || s.to_array().iter().any(|v| v.abs() > STATE_ABORT_LIMIT) {
            return Err(Error::NonFinite {
                context: "integrate",
                detail: format!("state diverged at t={:.3}", t + dt),
            });
        }
        out.push(((i + 1) as f64 * dt, s));
    }
    Ok(out)
}

/// Oriented body rectangle at a state.
pub fn footprint(state: &VehicleState, params: &VehicleParams) -> OrientedRect {
    OrientedRect {
        center: state.position(),
        heading: state.theta,
        length: params.footprint_length,
        width: params.footprint_width,
    }
}

/// Body-frame offsets of the four footprint corners.
pub fn footprint_corner_offsets(params: &VehicleParams) -> [Point2; 4] {
    let hl = 0.5 * params.footprint_length;
    let hw = 0.5 * params.footprint_width;
    [pt(hl, hw), pt(-hl, hw), pt(-hl, -hw), pt(hl, -hw)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defaults() -> (VehicleParams, ActuatorMap) {
        let cfg = crate::config::Config::default();
        (
            VehicleParams::from_config(&cfg.vehicle).unwrap(),
            ActuatorMap::from_config(&cfg.actuator).unwrap(),
        )
    }

    /// Term-by-term transcription of the model equations, kept independent
    /// of `derivative_forces` as an oracle.
    fn oracle_derivative(
        s: &VehicleState,
        input: &ControlInput,
        p: &VehicleParams,
        a: &ActuatorMap,
    ) -> [f64; 6] {
        let fx = input.throttle * (a.drive_gain[0] + a.drive_gain[1] * s.vx)
            - (a.drag_poly[0] + a.drag_poly[1] * s.vx + a.drag_poly[2] * s.vx.powi(2))
            - (a.brake_poly[0] * input.brake_pressure
                + a.brake_poly[1] * input.brake_pressure.powi(2))
                * (s.vx / p.vx_floor).clamp(0.0, 1.0);
        let delta = a.steer_ratio * input.steering_wheel_angle;
        let vd = if s.vx > p.vx_floor { s.vx } else { p.vx_floor };
        let af = f64::atan((s.vy + p.lf * s.omega) / vd) - delta;
        let ar = f64::atan((s.vy - p.lr * s.omega) / vd);
        let ffy = -p.df * f64::sin(p.pacejka_shape * f64::atan(p.bf * af));
        let fry = -p.dr * f64::sin(p.pacejka_shape * f64::atan(p.br * ar));
        [
            s.vx * s.theta.cos() - s.vy * s.theta.sin(),
            s.vx * s.theta.sin() + s.vy * s.theta.cos(),
            s.omega,
            (1.0 / p.mass) * fx - (1.0 / p.mass) * ffy * delta.sin() + s.vy * s.omega,
            (1.0 / p.mass) * ffy * delta.cos() + (1.0 / p.mass) * fry - s.vx * s.omega,
            (p.lf / p.yaw_inertia) * ffy * delta.cos() - (p.lr / p.yaw_inertia) * fry,
        ]
    }

    #[test]
    fn rest_with_zero_input_is_equilibrium() {
        let (p, a) = defaults();
        let d = derivative(&VehicleState::default(), &ControlInput::default(), &p, &a).unwrap();
        for v in d {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn kinematic_rows_rotate_velocity() {
        let (p, a) = defaults();
        let s = VehicleState {
            theta: std::f64::consts::FRAC_PI_2,
            vx: 10.0,
            ..Default::default()
        };
        let d = derivative(&s, &ControlInput::default(), &p, &a).unwrap();
        assert!(d[0].abs() < 1e-14);
        assert_relative_eq!(d[1], 10.0);
    }

    #[test]
    fn derivative_matches_term_by_term_oracle() {
        let (p, a) = defaults();
        let s = VehicleState { x: 0.0, y: 0.0, theta: 0.1, vx: 12.0, vy: 0.3, omega: 0.05 };
        let input =
            ControlInput { throttle: 0.4, brake_pressure: 0.0, steering_wheel_angle: 0.6 };
        let got = derivative(&s, &input, &p, &a).unwrap();
        let want = oracle_derivative(&s, &input, &p, &a);
        for i in 0..6 {
            assert_relative_eq!(got[i], want[i], max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_oracle_random_states() {
        use rand::Rng;
        let (p, a) = defaults();
        let mut rng = crate::rng::child_rng(42, "eq1-oracle", 0);
        for _ in 0..1000 {
            let s = VehicleState {
                x: rng.gen_range(-50.0..50.0),
                y: rng.gen_range(-50.0..50.0),
                theta: rng.gen_range(-3.0..3.0),
                vx: rng.gen_range(0.0..15.0),
                vy: rng.gen_range(-1.5..1.5),
                omega: rng.gen_range(-0.5..0.5),
            };
            let u = ControlInput {
                throttle: rng.gen_range(0.0..1.0),
                brake_pressure: rng.gen_range(0.0..1.0),
                steering_wheel_angle: rng.gen_range(-3.0..3.0),
            };
            let got = derivative(&s, &u, &p, &a).unwrap();
            let want = oracle_derivative(&s, &u, &p, &a);
            for i in 0..6 {
                assert_relative_eq!(got[i], want[i], max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_finite_state() {
        let (p, a) = defaults();
        let s = VehicleState { x: f64::NAN, ..Default::default() };
        assert!(derivative(&s, &ControlInput::default(), &p, &a).is_err());
    }

    #[test]
    fn zero_duration_returns_initial_state() {
        let (p, a) = defaults();
        let s = VehicleState::at_speed(5.0);
        let traj = integrate(&s, |_| ControlInput::default(), &p, &a, 0.01, 0.0).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj[0].1, s);
    }

    #[test]
    fn zero_input_from_rest_stays_at_rest() {
        let (p, a) = defaults();
        let traj = integrate(
            &VehicleState::default(),
            |_| ControlInput::default(),
            &p,
            &a,
            0.01,
            1.0,
        )
        .unwrap();
        for (_, s) in traj {
            assert_eq!(s, VehicleState::default());
        }
    }

    #[test]
    fn constant_throttle_matches_fine_step_reference() {
        let (p, a) = defaults();
        let s = VehicleState::at_speed(5.0);
        let input = |_| ControlInput { throttle: 0.5, ..Default::default() };
        let coarse = integrate(&s, input, &p, &a, 0.01, 2.0).unwrap();
        let fine = integrate(&s, input, &p, &a, 0.01 / 16.0, 2.0).unwrap();
        let v_c = coarse.last().unwrap().1.vx;
        let v_f = fine.last().unwrap().1.vx;
        assert!(((v_c - v_f) / v_f).abs() < 1e-6);
    }

    #[test]
    fn rk4_order_check_on_turning_maneuver() {
        let (p, a) = defaults();
        let s = VehicleState::at_speed(10.0);
        // smooth schedule keeps the flow C^infinity along the trajectory
        let input = |t: f64| ControlInput {
            throttle: 0.3,
            brake_pressure: 0.0,
            steering_wheel_angle: 1.2 * (1.3 * t).sin(),
        };
        let dt = 0.02;
        let err = |h: f64| {
            let sol = integrate(&s, input, &p, &a, h, 2.0).unwrap();
            let reference = integrate(&s, input, &p, &a, dt / 16.0, 2.0).unwrap();
            let (a1, a2) =
                (sol.last().unwrap().1.to_array(), reference.last().unwrap().1.to_array());
            (0..6).map(|i| (a1[i] - a2[i]).powi(2)).sum::<f64>().sqrt()
        };
        let e1 = err(dt);
        let e2 = err(dt / 2.0);
        assert!(
            e1 / e2 >= 8.0,
            "halving dt should shrink error ~16x (got {:.2}x, e1={e1:.3e} e2={e2:.3e})",
            e1 / e2
        );
    }

    #[test]
    fn footprint_axis_aligned_and_rotated() {
        let (p, _) = defaults();
        let r = footprint(&VehicleState::default(), &p);
        let c = r.corners();
        assert_relative_eq!(c[0].x, 2.4);
        assert_relative_eq!(c[0].y, 1.0);
        let rot = footprint(
            &VehicleState { theta: std::f64::consts::FRAC_PI_2, ..Default::default() },
            &p,
        );
        // extents swap under a quarter turn
        let xs: Vec<f64> = rot.corners().iter().map(|q| q.x).collect();
        let ys: Vec<f64> = rot.corners().iter().map(|q| q.y).collect();
        let span = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max)
            - v.iter().cloned().fold(f64::MAX, f64::min);
        assert_relative_eq!(span(&xs), 2.0, epsilon = 1e-12);
        assert_relative_eq!(span(&ys), 4.8, epsilon = 1e-12);
    }

    #[test]
    fn footprint_vertices_move_as_rigid_body_points() {
        let (p, a) = defaults();
        let s0 = VehicleState::at_speed(9.0);
        let input = |_| ControlInput { throttle: 0.35, steering_wheel_angle: 0.9, ..Default::default() };
        let dt = 1e-4;
        let traj = integrate(&s0, input, &p, &a, dt, 1.0).unwrap();
        let offsets = footprint_corner_offsets(&p);
        for w in traj.windows(3).step_by(97) {
            let (_, prev) = w[0];
            let (_, mid) = w[1];
            let (_, next) = w[2];
            for off in offsets {
                let fd = (next.body_point(off) - prev.body_point(off)) * (1.0 / (2.0 * dt));
                let vel = mid.body_point_velocity(off);
                assert!(
                    (fd - vel).norm() < 1e-4,
                    "vertex velocity mismatch: fd={fd:?} vel={vel:?}"
                );
            }
        }
    }

    #[test]
    fn actuator_inversion_round_trips() {
        let (p, a) = defaults();
        for &fx in &[-4000.0, -500.0, 0.0, 800.0, 3000.0] {
            for &v in &[1.0, 5.0, 12.0] {
                let (th, bp) = a.invert_fx(fx, v, p.vx_floor);
                let input =
                    ControlInput { throttle: th, brake_pressure: bp, steering_wheel_angle: 0.0 };
                let got = a.net_fx(input, v, p.vx_floor);
                if (0.0..=1.0).contains(&th) && (0.0..=1.0).contains(&bp) && th < 1.0 && bp < 1.0 {
                    assert_relative_eq!(got, fx, epsilon = 1e-6);
                }
            }
        }
    }
}
