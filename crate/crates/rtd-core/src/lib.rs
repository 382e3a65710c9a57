//! Reachability-based trajectory design (RTD) for a bicycle-model passenger
//! vehicle.
//!
//! The crate is split along the RTD pipeline:
//!
//! * [`vehicle`] — the high-fidelity bicycle model, actuator maps, the
//!   perturbed "virtual plant" used in place of a proprietary simulator, the
//!   LQ tracking controller, and empirical prediction-error measurement.
//! * [`reference`] — the trajectory-producing model, its steady-state lateral
//!   speed, the disturbance-augmented tracking model, and braking references.
//! * [`errorfn`] — fitting and validating the degree-2 tracking-error
//!   functions `g_x`, `g_y` per speed range.
//! * [`frs`] — sampled forward-reachable-set clouds, the polynomial `w` whose
//!   1-superlevel set over-approximates them, projections into parameter and
//!   spatial space, and containment/braking audits.
//! * [`obstacle`] — polygon buffering into segments and arcs, boundary
//!   discretization with conservatism guarantees, and the brute-force
//!   conservativeness oracle.
//! * [`track`] — the randomized closed test track, road-boundary obstacles,
//!   and sensing with persistent obstacle memory.
//! * [`planner`] — the online parameter optimization with hard reachability
//!   constraints, plus the persistent-feasibility horizon formulas.
//! * [`sim`] — the closed-loop receding-horizon harness, waypoint logic,
//!   crash/stop adjudication, and the RRT baseline planner.
//!
//! Batch workloads (Monte Carlo rollouts, cloud sampling, audits) run
//! data-parallel through [`exec`] when the `parallel` feature (default) is
//! enabled, with a sequential fallback that produces bit-identical results.

pub mod config;
pub mod errorfn;
pub mod exec;
pub mod frs;
pub mod geom;
pub mod io;
pub mod obstacle;
pub mod offline;
pub mod pipeline;
pub mod planner;
pub mod reference;
pub mod rng;
pub mod track;
pub mod vehicle;

mod error;

pub use error::{Error, Result};
