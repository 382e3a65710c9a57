//! Finite-horizon LQ tracking: at each control step the bicycle model is
//! linearized about the current reference point, a discrete Riccati
//! recursion runs over a short horizon, and the resulting gain acts on the
//! tracking error around feedforward trim inputs. Inputs are saturated to
//! actuator limits afterward.

use super::{derivative_forces, ActuatorMap, ControlInput, VehicleParams, VehicleState};
use crate::config::ControllerConfig;
use crate::geom::wrap_angle;
use crate::reference::ReferenceTrajectory;
use crate::{Error, Result};
use nalgebra::{SMatrix, SVector};

type Mat6 = SMatrix<f64, 6, 6>;
type Mat62 = SMatrix<f64, 6, 2>;
type Mat2 = SMatrix<f64, 2, 2>;
type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone)]
pub struct TrackingController {
    params: VehicleParams,
    act: ActuatorMap,
    cfg: ControllerConfig,
}

/// Steady-state cornering trim from linear tire balance: lateral speed and
/// wheel angle that hold `(vx, omega)`.
fn cornering_trim(params: &VehicleParams, vx: f64, omega: f64) -> (f64, f64) {
    let vd = vx.max(params.vx_floor);
    let alpha_r = -params.mass * vd * omega * params.lf / (params.cr * (params.lf + params.lr));
    let vy = vd * alpha_r + params.lr * omega;
    let alpha_f = alpha_r * (params.lr * params.cr) / (params.lf * params.cf);
    let delta = (vy + params.lf * omega) / vd - alpha_f;
    (vy, delta)
}

impl TrackingController {
    pub fn new(params: VehicleParams, act: ActuatorMap, cfg: ControllerConfig) -> Self {
        TrackingController { params, act, cfg }
    }

    /// Control command for the current state against the reference at
    /// local time `t`.
    pub fn command(&self, state: &VehicleState, reference: &ReferenceTrajectory, t: f64) -> ControlInput {
        let r = reference.point_at(t);
        let (vy_trim, delta_trim) = cornering_trim(&self.params, r.vx, r.omega);

        // feedforward net force: hold the reference acceleration against the
        // lateral-force and coriolis terms of the longitudinal row
        let alpha_f_trim =
            (vy_trim + self.params.lf * r.omega) / r.vx.max(self.params.vx_floor) - delta_trim;
        let f_fy_trim = -self.params.cf * alpha_f_trim;
        let fx_trim =
            self.params.mass * (r.ax - vy_trim * r.omega) + f_fy_trim * delta_trim.sin();

        let ref_state = VehicleState {
            x: r.pos.x,
            y: r.pos.y,
            theta: r.heading,
            vx: r.vx,
            vy: vy_trim,
            omega: r.omega,
        };

        let (a, b) = self.linearize(&ref_state, fx_trim, delta_trim);
        let gain = self.riccati_gain(&a, &b);

        let e = Vec6::from_column_slice(&[
            state.x - ref_state.x,
            state.y - ref_state.y,
            wrap_angle(state.theta - ref_state.theta),
            state.vx - ref_state.vx,
            state.vy - ref_state.vy,
            state.omega - ref_state.omega,
        ]);
        let du = -gain * e;
        let fx = fx_trim + du[0];
        let delta = delta_trim + du[1];

        let (throttle, brake) = self.act.invert_fx(fx, state.vx, self.params.vx_floor);
        ControlInput {
            throttle,
            brake_pressure: brake,
            steering_wheel_angle: self.act.invert_wheel_angle(delta),
        }
        .clamped(&self.act)
    }

    /// Like [`Self::command`], rejecting an empty reference.
    pub fn track_reference(
        &self,
        state: &VehicleState,
        reference: &ReferenceTrajectory,
        t: f64,
    ) -> Result<ControlInput> {
        if reference.points.is_empty() {
            return Err(Error::invalid("track_reference: empty reference"));
        }
        Ok(self.command(state, reference, t))
    }

    /// Central-difference Jacobians of the force-level dynamics.
    fn linearize(&self, z: &VehicleState, fx: f64, delta: f64) -> (Mat6, Mat62) {
        let mut a = Mat6::zeros();
        let hs = [1e-4, 1e-4, 1e-5, 1e-4, 1e-4, 1e-5];
        for j in 0..6 {
            let h = hs[j];
            let mut zp = z.to_array();
            let mut zm = z.to_array();
            zp[j] += h;
            zm[j] -= h;
            let fp = derivative_forces(&VehicleState::from_array(zp), fx, delta, &self.params);
            let fm = derivative_forces(&VehicleState::from_array(zm), fx, delta, &self.params);
            for i in 0..6 {
                a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        let mut b = Mat62::zeros();
        let hu = [1.0, 1e-5];
        for (j, h) in hu.iter().enumerate() {
            let (fxp, fxm, dp, dm) = if j == 0 {
                (fx + h, fx - h, delta, delta)
            } else {
                (fx, fx, delta + h, delta - h)
            };
            let fp = derivative_forces(z, fxp, dp, &self.params);
            let fm = derivative_forces(z, fxm, dm, &self.params);
            for i in 0..6 {
                b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        (a, b)
    }

    /// Discrete finite-horizon Riccati recursion; returns the first-step gain.
    fn riccati_gain(&self, a_cont: &Mat6, b_cont: &Mat62) -> SMatrix<f64, 2, 6> {
        let dt = self.cfg.dt;
        let ad = Mat6::identity() + a_cont * dt;
        let bd = b_cont * dt;
        let q = Mat6::from_diagonal(&Vec6::from_column_slice(&self.cfg.q));
        let r = Mat2::from_diagonal(&SVector::<f64, 2>::from_column_slice(&self.cfg.r));

        let mut p = q;
        let mut gain = SMatrix::<f64, 2, 6>::zeros();
        for _ in 0..self.cfg.horizon {
            let btp = bd.transpose() * p;
            let s = r + btp * bd;
            let s_inv = s.try_inverse().unwrap_or_else(Mat2::identity);
            gain = s_inv * btp * ad;
            p = q + ad.transpose() * p * (ad - bd * gain);
        }
        gain
    }
}
