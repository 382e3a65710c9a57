//! The virtual plant: the same bicycle model with parameters perturbed once
//! per scenario and a first-order lag on all three inputs. It plays the role
//! of the "real" vehicle, so the gap between it and the nominal model is the
//! prediction error the rest of the pipeline must absorb.

use super::{
    footprint_corner_offsets, ActuatorMap, ControlInput, TrackingController, VehicleParams,
    VehicleState,
};
use crate::config::PlantConfig;
use crate::exec;
use crate::reference::braking_reference;
use crate::rng::child_rng;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One perturbation draw: relative factors applied to the nominal params.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationDraw {
    pub mass_factor: f64,
    pub inertia_factor: f64,
    pub front_stiffness_factor: f64,
    pub rear_stiffness_factor: f64,
}

impl PerturbationDraw {
    pub fn none() -> Self {
        PerturbationDraw {
            mass_factor: 1.0,
            inertia_factor: 1.0,
            front_stiffness_factor: 1.0,
            rear_stiffness_factor: 1.0,
        }
    }

    pub fn sample(cfg: &PlantConfig, seed: u64, index: u64) -> Self {
        let mut rng = child_rng(seed, "plant-perturbation", index);
        let j = |r: &mut rand_chacha::ChaCha8Rng, width: f64| {
            if width == 0.0 {
                1.0
            } else {
                1.0 + r.gen_range(-width..=width)
            }
        };
        PerturbationDraw {
            mass_factor: j(&mut rng, cfg.mass_jitter),
            inertia_factor: j(&mut rng, cfg.inertia_jitter),
            front_stiffness_factor: j(&mut rng, cfg.stiffness_jitter),
            rear_stiffness_factor: j(&mut rng, cfg.stiffness_jitter),
        }
    }

    /// Apply to nominal parameters. Stiffness scales the whole lateral force
    /// curve (slope and peak together).
    pub fn apply(&self, nominal: &VehicleParams) -> VehicleParams {
        VehicleParams {
            mass: nominal.mass * self.mass_factor,
            yaw_inertia: nominal.yaw_inertia * self.inertia_factor,
            cf: nominal.cf * self.front_stiffness_factor,
            df: nominal.df * self.front_stiffness_factor,
            cr: nominal.cr * self.rear_stiffness_factor,
            dr: nominal.dr * self.rear_stiffness_factor,
            ..*nominal
        }
    }
}

/// The perturbed, lagged vehicle.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: VehicleParams,
    pub act: ActuatorMap,
    pub state: VehicleState,
    /// Realized (post-lag) actuator values.
    pub applied: ControlInput,
}

impl Plant {
    pub fn new(
        nominal: &VehicleParams,
        act: &ActuatorMap,
        perturbation: PerturbationDraw,
        initial: VehicleState,
    ) -> Self {
        Plant {
            params: perturbation.apply(nominal),
            act: *act,
            state: initial,
            applied: ControlInput::default(),
        }
    }

    /// Advance one step under a commanded input. The realized input follows
    /// the command through a first-order lag and is held across the step.
    pub fn step(&mut self, command: ControlInput, dt: f64) -> Result<VehicleState> {
        let command = command.clamped(&self.act);
        let tau = self.act.lag_tau;
        if tau <= 0.0 {
            self.applied = command;
        } else {
            let a = 1.0 - (-dt / tau).exp();
            self.applied = ControlInput {
                throttle: self.applied.throttle + a * (command.throttle - self.applied.throttle),
                brake_pressure: self.applied.brake_pressure
                    + a * (command.brake_pressure - self.applied.brake_pressure),
                steering_wheel_angle: self.applied.steering_wheel_angle
                    + a * (command.steering_wheel_angle - self.applied.steering_wheel_angle),
            };
        }
        self.state = super::step_held_input(&self.state, &self.applied, &self.params, &self.act, dt);
        if !self.state.is_finite() {
            return Err(Error::NonFinite { context: "plant_step", detail: format!("{:?}", self.state) });
        }
        Ok(self.state)
    }
}

/// Per-state absolute prediction-error bounds, ordered as the eight-state
/// model: center of mass x, y; body point x, y; heading; vx; vy; omega.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrorBound {
    pub eps: [f64; 8],
}

impl PredictionErrorBound {
    pub fn zero() -> Self {
        PredictionErrorBound { eps: [0.0; 8] }
    }

    /// Spatial body-point components used downstream (m).
    pub fn eps_x(&self) -> f64 {
        self.eps[2]
    }

    pub fn eps_y(&self) -> f64 {
        self.eps[3]
    }

    pub fn eps_norm(&self) -> f64 {
        self.eps_x().hypot(self.eps_y())
    }
}

fn trial_max_deviation(
    nominal: &VehicleParams,
    act: &ActuatorMap,
    plant_cfg: &PlantConfig,
    horizon: f64,
    seed: u64,
    index: u64,
) -> [f64; 8] {
    let mut rng = child_rng(seed, "eps-trial", index);
    let v0 = rng.gen_range(3.0..nominal.v_max);
    let state = VehicleState {
        vx: v0,
        vy: rng.gen_range(-0.3..0.3),
        omega: rng.gen_range(-0.2..0.2),
        ..Default::default()
    };
    let throttle = rng.gen_range(0.1..0.6);
    let amp = rng.gen_range(0.0..1.5);
    let freq = rng.gen_range(0.2..0.8) * std::f64::consts::TAU;
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let schedule = move |t: f64| ControlInput {
        throttle,
        brake_pressure: 0.0,
        steering_wheel_angle: amp * (freq * t + phase).sin(),
    };

    let dt = 0.01;
    let draw = PerturbationDraw::sample(plant_cfg, seed, index);
    let mut plant = Plant::new(nominal, act, draw, state);
    let corners = footprint_corner_offsets(nominal);

    // the nominal prediction steps with the same held-input semantics as the
    // plant, so zero perturbation and zero lag give a bit-identical pair
    let mut model_state = state;
    let mut worst = [0.0f64; 8];
    let n = (horizon / dt).round() as usize;
    for i in 0..n {
        let t = i as f64 * dt;
        let cmd = schedule(t);
        model_state = super::step_held_input(&model_state, &cmd, nominal, act, dt);
        plant.step(cmd, dt).expect("plant rollout stays finite");
        let m = model_state;
        let p = plant.state;
        let mut body_dx = 0.0f64;
        let mut body_dy = 0.0f64;
        for off in corners {
            let d = m.body_point(off) - p.body_point(off);
            body_dx = body_dx.max(d.x.abs());
            body_dy = body_dy.max(d.y.abs());
        }
        let errs = [
            (m.x - p.x).abs(),
            (m.y - p.y).abs(),
            body_dx,
            body_dy,
            crate::geom::wrap_angle(m.theta - p.theta).abs(),
            (m.vx - p.vx).abs(),
            (m.vy - p.vy).abs(),
            (m.omega - p.omega).abs(),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    worst
}

/// Empirically bound prediction error: run `n_trials` paired rollouts of the
/// nominal model and a freshly perturbed plant under identical commanded
/// inputs, take elementwise maxima of the absolute state deviation over
/// `[0, horizon]`, and inflate by `inflation`.
pub fn measure_prediction_error(
    nominal: &VehicleParams,
    act: &ActuatorMap,
    plant_cfg: &PlantConfig,
    n_trials: usize,
    horizon: f64,
    inflation: f64,
    seed: u64,
) -> Result<PredictionErrorBound> {
    if n_trials == 0 {
        return Err(Error::invalid("measure_prediction_error: n_trials must be > 0"));
    }
    let per_trial = exec::map_indexed(n_trials, |i| {
        trial_max_deviation(nominal, act, plant_cfg, horizon, seed, i as u64)
    });
    let mut eps = [0.0f64; 8];
    for trial in per_trial {
        for (e, t) in eps.iter_mut().zip(trial) {
            *e = e.max(t);
        }
    }
    for e in eps.iter_mut() {
        *e *= inflation;
    }
    Ok(PredictionErrorBound { eps })
}

/// Distance (m) the plant travels from speed `v` while tracking the braking
/// reference until it slows below `stop_speed`.
pub fn measure_stopping_distance(
    v: f64,
    nominal: &VehicleParams,
    act: &ActuatorMap,
    controller: &TrackingController,
    a_max_brake: f64,
    dt: f64,
    stop_speed: f64,
) -> f64 {
    if v <= stop_speed {
        return 0.0;
    }
    let reference = braking_reference(
        crate::reference::TrajectoryParam { k1: 0.0, k2: v },
        dt, // brake essentially immediately
        nominal,
        a_max_brake,
        dt,
    );
    let mut plant = Plant::new(nominal, act, PerturbationDraw::none(), VehicleState::at_speed(v));
    let mut distance = 0.0;
    let mut prev = plant.state.position();
    let max_steps = (60.0 / dt) as usize;
    for i in 0..max_steps {
        let t = i as f64 * dt;
        let cmd = controller.command(&plant.state, &reference, t);
        if plant.step(cmd, dt).is_err() {
            break;
        }
        distance += plant.state.position().dist(prev);
        prev = plant.state.position();
        if plant.state.vx < stop_speed {
            break;
        }
    }
    distance
}
