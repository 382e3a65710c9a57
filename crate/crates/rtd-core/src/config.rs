//! Runtime configuration.
//!
//! Everything tunable lives here and is loaded from a single TOML file; every
//! field has a default so a partial file (or none) works. Offline artifacts
//! embed [`Config::hash_hex`] in their filenames so a stale error-function or
//! reachable-set file can never silently pair with a different vehicle.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub vehicle: VehicleConfig,
    pub actuator: ActuatorConfig,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub trajectory: TrajectoryConfig,
    pub error_fn: ErrorFnConfig,
    pub frs: FrsConfig,
    pub obstacles: ObstacleConfig,
    pub planner: PlannerConfig,
    pub highlevel: HighLevelConfig,
    pub track: TrackConfig,
    pub sim: SimConfig,
    pub rrt: RrtConfig,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Config = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.actuator.validate()?;
        if self.planner.tau_plan <= 0.0 {
            return Err(Error::Config("planner.tau_plan must be > 0".into()));
        }
        if self.planner.dk2_limit <= 0.0 || self.planner.k1_limit <= 0.0 {
            return Err(Error::Config("planner k-change limits must be > 0".into()));
        }
        if self.obstacles.buffer <= 0.0 || self.obstacles.buffer >= self.vehicle.footprint_width / 2.0
        {
            return Err(Error::Config(format!(
                "obstacles.buffer must lie in (0, W/2) = (0, {})",
                self.vehicle.footprint_width / 2.0
            )));
        }
        if self.obstacles.road_buffer <= 0.0
            || self.obstacles.road_buffer >= self.vehicle.footprint_width / 2.0
        {
            return Err(Error::Config("obstacles.road_buffer must lie in (0, W/2)".into()));
        }
        if self.frs.ranges.is_empty() {
            return Err(Error::Config("frs.ranges must be nonempty".into()));
        }
        for w in self.frs.ranges.windows(2) {
            if (w[0][1] - w[1][0]).abs() > 1e-9 {
                return Err(Error::Config("frs.ranges must tile without gaps".into()));
            }
        }
        Ok(())
    }

    /// First 12 hex chars of the SHA-256 of the canonical (JSON) form; used
    /// to content-address offline artifacts.
    pub fn hash_hex(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

/// Bicycle-model parameters. The published experiment never disclosed its
/// plant values, so these defaults are typical-sedan stand-ins; override them
/// in the config file for a different vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    /// Mass (kg).
    pub mass: f64,
    /// Yaw moment of inertia (kg m^2).
    pub yaw_inertia: f64,
    /// Front axle distance from center of mass (m).
    pub lf: f64,
    /// Rear axle distance from center of mass (m).
    pub lr: f64,
    /// Front/rear cornering stiffness (N/rad): the small-slip slope of the
    /// lateral force curve.
    pub cf: f64,
    pub cr: f64,
    /// Front/rear lateral force peaks (N).
    pub df: f64,
    pub dr: f64,
    /// Shared shape factor of the simplified lateral force model.
    pub pacejka_shape: f64,
    /// Body rectangle (m).
    pub footprint_length: f64,
    pub footprint_width: f64,
    /// Maximum speed considered (m/s).
    pub v_max: f64,
    /// Speed floor used in slip-angle denominators (m/s).
    pub vx_floor: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig {
            mass: 1500.0,
            yaw_inertia: 2500.0,
            lf: 1.2,
            lr: 1.4,
            cf: 90_000.0,
            cr: 100_000.0,
            df: 7100.0,
            dr: 6100.0,
            pacejka_shape: 1.3,
            footprint_length: 4.8,
            footprint_width: 2.0,
            v_max: 15.0,
            vx_floor: 0.5,
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("lf", self.lf),
            ("lr", self.lr),
            ("cf", self.cf),
            ("cr", self.cr),
            ("df", self.df),
            ("dr", self.dr),
            ("pacejka_shape", self.pacejka_shape),
            ("footprint_length", self.footprint_length),
            ("footprint_width", self.footprint_width),
            ("v_max", self.v_max),
            ("vx_floor", self.vx_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("vehicle.{name} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Input-to-force maps. Stand-ins for unpublished fitted polynomials, with
/// the same structure: quadratic force maps plus a linear steering ratio and
/// a first-order actuator lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    /// Drive force: `F = throttle * (a0 + a1 * v) - drag(v)`.
    pub drive_gain: [f64; 2],
    /// Passive drag `d0 + d1 v + d2 v^2` (d0 = 0 keeps rest an equilibrium).
    pub drag_poly: [f64; 3],
    /// Braking force `b0 p + b1 p^2`, opposing motion.
    pub brake_poly: [f64; 2],
    /// Wheel angle per steering-wheel radian.
    pub steer_ratio: f64,
    /// Steering wheel limit (rad).
    pub steer_wheel_limit: f64,
    /// First-order input lag time constant (s); 0 disables the lag.
    pub lag_tau: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        ActuatorConfig {
            drive_gain: [5000.0, -100.0],
            drag_poly: [0.0, 3.0, 0.4],
            brake_poly: [6000.0, 6000.0],
            steer_ratio: 1.0 / 15.0,
            steer_wheel_limit: 7.85,
            lag_tau: 0.05,
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steer_ratio <= 0.0 {
            return Err(Error::Config("actuator.steer_ratio must be > 0".into()));
        }
        if self.lag_tau < 0.0 {
            return Err(Error::Config("actuator.lag_tau must be >= 0".into()));
        }
        if self.brake_poly[0] < 0.0 || self.brake_poly[1] < 0.0 {
            return Err(Error::Config("actuator.brake_poly must be nondecreasing".into()));
        }
        Ok(())
    }
}

/// Parameter perturbation ranges for the virtual plant (relative jitter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub mass_jitter: f64,
    pub inertia_jitter: f64,
    pub stiffness_jitter: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig { mass_jitter: 0.05, inertia_jitter: 0.05, stiffness_jitter: 0.10 }
    }
}

/// Finite-horizon LQ tracking law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub dt: f64,
    /// State error weights: x, y, theta, vx, vy, omega.
    pub q: [f64; 6],
    /// Input weights: drive force (N), wheel angle (rad).
    pub r: [f64; 2],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            horizon: 20,
            dt: 0.01,
            q: [20.0, 20.0, 30.0, 8.0, 2.0, 4.0],
            r: [2e-7, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    /// Commanded deceleration of the braking reference (m/s^2).
    pub a_max_brake: f64,
    /// Disturbance switching grid for reachability sampling (s).
    pub disturbance_grid: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { a_max_brake: 4.0, disturbance_grid: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorFnConfig {
    /// Multiplicative inflation applied after the envelope fit.
    pub margin_frac: f64,
    /// Minimum error rate (m/s); also the fallback for all-zero samples.
    pub floor: f64,
    /// Parameter samples per speed range.
    pub n_k: usize,
    /// Initial conditions per parameter.
    pub n_ic: usize,
    /// Nonnegativity grid size over [0, T].
    pub grid_points: usize,
    /// Prediction-error measurement: paired-rollout count and inflation.
    pub eps_trials: usize,
    pub eps_inflation: f64,
    pub eps_horizon: f64,
}

impl Default for ErrorFnConfig {
    fn default() -> Self {
        ErrorFnConfig {
            margin_frac: 0.10,
            floor: 1e-3,
            n_k: 6,
            n_ic: 8,
            grid_points: 200,
            eps_trials: 400,
            eps_inflation: 1.10,
            eps_horizon: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrsConfig {
    /// Half-degree of the reachable-set polynomial (degree = 2 alpha).
    pub alpha: u32,
    /// Spatial dilation of cloud points before fitting (m).
    pub r_inflate: f64,
    /// Negative samples per positive sample.
    pub negative_ratio: usize,
    /// Half-gap between positive and negative fit targets.
    pub delta_fit: f64,
    /// Speed ranges (lo, hi) tiling the operating band (m/s).
    pub ranges: Vec<[f64; 2]>,
    /// Parameter grid for cloud sampling.
    pub n_k1: usize,
    pub n_k2: usize,
    /// Footprint seed points per parameter (max 9: center, corners, edge
    /// midpoints).
    pub n_z0: usize,
    /// Disturbance signals per (k, z0).
    pub n_d: usize,
    /// Plant braking rollouts per parameter sample.
    pub n_brake: usize,
    /// Integration step for cloud sampling (s).
    pub dt: f64,
    /// Positive-sample budget for the least-squares fit.
    pub fit_budget: usize,
    /// Reweighting rounds before the containment shift.
    pub reweight_rounds: usize,
    /// Hold-out containment threshold (fraction).
    pub holdout_threshold: f64,
    /// Hold-out cloud size for the audit.
    pub n_holdout: usize,
    /// Marching-squares resolution (cells along x).
    pub contour_cells: usize,
}

impl Default for FrsConfig {
    fn default() -> Self {
        FrsConfig {
            alpha: 3,
            r_inflate: 0.3,
            negative_ratio: 5,
            delta_fit: 0.5,
            ranges: vec![[3.0, 5.0], [5.0, 7.0], [7.0, 9.0], [9.0, 11.0], [11.0, 13.0], [13.0, 15.0]],
            n_k1: 7,
            n_k2: 5,
            n_z0: 9,
            n_d: 8,
            n_brake: 12,
            dt: 0.01,
            fit_budget: 30_000,
            reweight_rounds: 2,
            holdout_threshold: 0.999,
            n_holdout: 10_000,
            contour_cells: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    /// Buffer distance b for box obstacles (m), in (0, W/2).
    pub buffer: f64,
    /// Buffer distance for road-boundary strips (m); coarser spacing keeps
    /// the online constraint count affordable.
    pub road_buffer: f64,
}

impl Default for ObstacleConfig {
    fn default() -> Self {
        ObstacleConfig { buffer: 0.05, road_buffer: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Planning budget per iteration (s).
    pub tau_plan: f64,
    /// Max commanded speed change per iteration (m/s).
    pub dk2_limit: f64,
    /// Max commanded yaw-rate magnitude (rad/s).
    pub k1_limit: f64,
    /// Feasibility margin below the level-set threshold 1.
    pub delta_safe: f64,
    /// Cost weights: squared endpoint distance, squared speed error.
    pub alpha_p: f64,
    pub alpha_v: f64,
    /// Coarse feasibility grid (per axis).
    pub grid: usize,
    /// Local refinements launched from the best feasible grid points.
    pub refine_starts: usize,
    /// Barrier continuation rounds in the refinement.
    pub barrier_rounds: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            tau_plan: 0.5,
            dk2_limit: 1.0,
            k1_limit: 0.25,
            delta_safe: 1e-6,
            alpha_p: 1.0,
            alpha_v: 4.0,
            grid: 21,
            refine_starts: 3,
            barrier_rounds: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighLevelConfig {
    /// Lookahead time (s): waypoint distance = c_look * speed.
    pub c_look: f64,
    /// Minimum lookahead distance (m).
    pub lookahead_floor: f64,
    /// Cruise speed target (m/s).
    pub cruise_speed: f64,
}

impl Default for HighLevelConfig {
    fn default() -> Self {
        HighLevelConfig { c_look: 1.5, lookahead_floor: 10.0, cruise_speed: 12.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Target centerline length (m) and relative tolerance.
    pub length: f64,
    pub length_tol: f64,
    /// Number of turns.
    pub turns: usize,
    /// Turn curvature band (1/m).
    pub curvature: [f64; 2],
    /// Lane width (m); the road is two lanes wide.
    pub lane_width: f64,
    /// Road-boundary strip width outside the road (m).
    pub boundary_buffer: f64,
    pub n_obstacles: usize,
    pub obstacle_length: [f64; 2],
    pub obstacle_width: [f64; 2],
    /// Longitudinal spacing band between consecutive obstacles (m).
    pub spacing: [f64; 2],
    /// Minimum arc length from start to the first obstacle (m).
    pub first_obstacle: f64,
    /// Polygonization step for boundary strips (m of arc length).
    pub strip_step: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            length: 1036.0,
            length_tol: 0.02,
            turns: 7,
            curvature: [0.005, 0.04],
            lane_width: 4.0,
            boundary_buffer: 2.5,
            n_obstacles: 20,
            obstacle_length: [3.3, 5.1],
            obstacle_width: [1.7, 2.5],
            spacing: [40.0, 55.0],
            first_obstacle: 50.0,
            strip_step: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Plant/controller step (s).
    pub dt: f64,
    /// Wall limit on simulated time (s).
    pub max_time: f64,
    /// Initial speed at the start pose (m/s).
    pub v0: f64,
    /// Speed below which the vehicle counts as stopped (m/s).
    pub stop_speed: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { dt: 0.01, max_time: 400.0, v0: 8.0, stop_speed: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrtConfig {
    /// Obstacle expansion for center-of-mass collision checks (m, total).
    pub buffer_length: f64,
    pub buffer_width: f64,
    /// Input hold time per expansion (s).
    pub hold_time: f64,
    /// Integration samples per expansion.
    pub samples_per_expansion: usize,
    /// Expansion attempts per planning iteration (realtime / extended).
    pub budget_realtime: usize,
    pub budget_extended: usize,
    /// Fraction of the budget spent on the braking tree.
    pub brake_tree_frac: f64,
    /// Cost weights: obstacle proximity, boundary proximity, input magnitude.
    pub w_obstacle: f64,
    pub w_boundary: f64,
    pub w_input: f64,
    /// Steering-wheel sampling range (rad).
    pub steer_range: f64,
    /// Candidate nodes checked for a valid braking continuation.
    pub brake_candidates: usize,
}

impl Default for RrtConfig {
    fn default() -> Self {
        RrtConfig {
            buffer_length: 4.0,
            buffer_width: 1.5,
            hold_time: 0.5,
            samples_per_expansion: 50,
            budget_realtime: 600,
            budget_extended: 6000,
            brake_tree_frac: 0.3,
            w_obstacle: 8.0,
            w_boundary: 4.0,
            w_input: 0.5,
            steer_range: 3.0,
            brake_candidates: 8,
        }
    }
}
