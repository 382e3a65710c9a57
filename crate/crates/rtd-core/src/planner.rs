//! Online trajectory-parameter optimization: minimize a waypoint cost over
//! the parameter box subject to `w(z, k) <= 1 - delta_safe` for every
//! discretized obstacle point `z`, under a hard per-iteration budget. Also
//! hosts the persistent-feasibility arithmetic tying the planning horizon,
//! stopping distance and sensor range together.

use crate::config::PlannerConfig;
use crate::frs::{CollapsedPoly, FrsPolynomial};
use crate::geom::{pt, Point2, Transform2};
use crate::reference::{DesiredTrajectory, TrajectoryParam};
use crate::vehicle::VehicleParams;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Minimal admissible trajectory horizon: planning budget plus the time to
/// cover the stopping distance at the range's top speed.
pub fn compute_horizon(tau_plan: f64, d_stop: f64, v_max: f64) -> f64 {
    tau_plan + d_stop / v_max
}

/// Minimum sensor radius for persistent feasibility.
pub fn compute_sensor_horizon(t: f64, tau_plan: f64, v_max: f64, eps_x: f64, eps_y: f64) -> f64 {
    (t + tau_plan) * v_max + 2.0 * eps_x.hypot(eps_y)
}

/// Per-range horizon bookkeeping plus the library-wide sensor radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityParams {
    /// (speed range, horizon T, stopping distance) per library entry.
    pub per_range: Vec<((f64, f64), f64, f64)>,
    pub d_sense: f64,
    /// `sqrt(eps_x^2 + eps_y^2)`.
    pub eps_norm: f64,
}

impl FeasibilityParams {
    pub fn from_library(
        library: &crate::frs::FrsLibrary,
        tau_plan: f64,
        v_max: f64,
        eps_x: f64,
        eps_y: f64,
    ) -> Self {
        let per_range: Vec<((f64, f64), f64, f64)> = library
            .entries
            .iter()
            .map(|e| (e.speed_range, e.horizon, e.audit.d_stop))
            .collect();
        let d_sense = per_range
            .iter()
            .map(|(_, t, _)| compute_sensor_horizon(*t, tau_plan, v_max, eps_x, eps_y))
            .fold(0.0f64, f64::max);
        FeasibilityParams { per_range, d_sense, eps_norm: eps_x.hypot(eps_y) }
    }
}

/// Per-iteration planning budget. Wall-clock in production; a deterministic
/// evaluation count in tests and benchmarks.
#[derive(Debug)]
pub enum Budget {
    WallClock { start: Instant, limit: f64 },
    EvalCount { remaining: usize },
}

impl Budget {
    pub fn wall_clock(limit: f64) -> Self {
        Budget::WallClock { start: Instant::now(), limit }
    }

    pub fn eval_count(n: usize) -> Self {
        Budget::EvalCount { remaining: n }
    }

    /// Charge one constraint-scan unit; false once the budget is exhausted.
    fn charge(&mut self) -> bool {
        match self {
            Budget::WallClock { start, limit } => start.elapsed().as_secs_f64() < *limit,
            Budget::EvalCount { remaining } => {
                if *remaining == 0 {
                    false
                } else {
                    *remaining -= 1;
                    true
                }
            }
        }
    }
}

/// Everything one planning iteration needs, already in the plan-local frame.
#[derive(Debug, Clone)]
pub struct PlanningContext<'a> {
    pub frs: &'a FrsPolynomial,
    pub params: &'a VehicleParams,
    /// Merged discretized-obstacle points (plan-local).
    pub xp: Vec<Point2>,
    pub waypoint_pos: Point2,
    pub waypoint_speed: f64,
    pub k_prev: Option<TrajectoryParam>,
    /// Current longitudinal speed, bounding the commanded speed change.
    pub speed_now: f64,
    pub cfg: PlannerConfig,
}

impl PlanningContext<'_> {
    fn validate(&self) -> Result<()> {
        if !self.xp.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("planning context: non-finite obstacle point"));
        }
        if !self.waypoint_pos.is_finite() || !self.waypoint_speed.is_finite() {
            return Err(Error::invalid("planning context: non-finite waypoint"));
        }
        if self.cfg.tau_plan <= 0.0 {
            return Err(Error::invalid("planning context: tau_plan must be > 0"));
        }
        Ok(())
    }

    /// Feasible parameter intervals after the per-iteration change limits.
    fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        let pb = &self.frs.param_box;
        let k1 = [pb.k1_min.max(-self.cfg.k1_limit), pb.k1_max.min(self.cfg.k1_limit)];
        let k2 = [
            pb.k2_min.max(self.speed_now - self.cfg.dk2_limit),
            pb.k2_max.min(self.speed_now + self.cfg.dk2_limit),
        ];
        if k1[0] > k1[1] || k2[0] > k2[1] {
            None
        } else {
            Some((k1, k2))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    NewPlan(TrajectoryParam),
    Brake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub solve_time: f64,
    /// Exact max of `w` over the obstacle points at the chosen parameter.
    pub max_w: Option<f64>,
    pub cost: Option<f64>,
    /// Constraint-scan evaluations spent.
    pub evals: usize,
}

/// Waypoint cost: squared distance from the desired-trajectory endpoint to
/// the waypoint plus a squared speed error.
pub fn cost_j(k: TrajectoryParam, ctx: &PlanningContext) -> f64 {
    let des = DesiredTrajectory::new(k, ctx.params, pt(0.0, 0.0));
    let end = des.point_at(ctx.frs.horizon, pt(0.0, 0.0));
    let dp = end - ctx.waypoint_pos;
    ctx.cfg.alpha_p * dp.dot(dp)
        + ctx.cfg.alpha_v * (k.k2 - ctx.waypoint_speed) * (k.k2 - ctx.waypoint_speed)
}

/// Exact constraint value `max_z w(z, k)`; `early_out` aborts the scan once
/// the value can no longer be feasible.
fn max_constraint(col: &CollapsedPoly, xp: &[Point2], early_out: Option<f64>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &z in xp {
        let w = col.eval(z);
        if w > worst {
            worst = w;
            if let Some(cut) = early_out {
                if worst > cut {
                    return worst;
                }
            }
        }
    }
    worst
}

/// Two-phase deterministic solve: coarse feasibility scan over the bounded
/// parameter grid, then barrier-penalized quasi-Newton refinement from the
/// best feasible grid points. Returns a braking decision when nothing
/// feasible is found or the budget runs out without an incumbent.
pub fn solve(ctx: &PlanningContext, budget: &mut Budget) -> Result<PlanResult> {
    let t0 = Instant::now();
    ctx.validate()?;
    let mut evals = 0usize;
    let threshold = 1.0 - ctx.cfg.delta_safe;

    let Some((k1b, k2b)) = ctx.bounds() else {
        return Ok(PlanResult {
            outcome: PlanOutcome::Brake,
            solve_time: t0.elapsed().as_secs_f64(),
            max_w: None,
            cost: None,
            evals,
        });
    };

    let n = ctx.cfg.grid.max(2);
    let lin = |b: [f64; 2], i: usize| b[0] + (b[1] - b[0]) * i as f64 / (n - 1) as f64;

    // phase 1: feasibility scan
    let mut feasible: Vec<(f64, TrajectoryParam, f64)> = Vec::new(); // (J, k, max_w)
    let mut budget_hit = false;
    'scan: for i1 in 0..n {
        for i2 in 0..n {
            if !budget.charge() {
                budget_hit = true;
                break 'scan;
            }
            let k = TrajectoryParam { k1: lin(k1b, i1), k2: lin(k2b, i2) };
            let col = ctx.frs.collapse(k);
            evals += 1;
            let w = if ctx.xp.is_empty() {
                f64::NEG_INFINITY
            } else {
                max_constraint(&col, &ctx.xp, Some(threshold))
            };
            if w <= threshold {
                feasible.push((cost_j(k, ctx), k, w));
            }
        }
    }
    if feasible.is_empty() {
        return Ok(PlanResult {
            outcome: PlanOutcome::Brake,
            solve_time: t0.elapsed().as_secs_f64(),
            max_w: None,
            cost: None,
            evals,
        });
    }
    feasible.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut best = feasible[0];

    // phase 2: barrier refinement from the leading grid points
    if !budget_hit {
        let starts: Vec<TrajectoryParam> =
            feasible.iter().take(ctx.cfg.refine_starts.max(1)).map(|f| f.1).collect();
        'starts: for start in starts {
            let mut k = start;
            let mut mu = best.0.abs().max(1.0) * 1e-2;
            for _round in 0..ctx.cfg.barrier_rounds.max(1) {
                let mut h_inv = [[1e-3, 0.0], [0.0, 1e-1]]; // seed inverse Hessian scale
                let mut prev_grad: Option<[f64; 2]> = None;
                let mut prev_step = [0.0, 0.0];
                for _iter in 0..12 {
                    if !budget.charge() {
                        budget_hit = true;
                        break 'starts;
                    }
                    let phi = |kk: TrajectoryParam, ev: &mut usize| -> f64 {
                        *ev += 1;
                        let col = ctx.frs.collapse(kk);
                        let w = if ctx.xp.is_empty() {
                            f64::NEG_INFINITY
                        } else {
                            max_constraint(&col, &ctx.xp, None)
                        };
                        let slack = threshold - w;
                        if slack <= 0.0 {
                            return f64::INFINITY;
                        }
                        let barrier = if w.is_finite() { -mu * slack.ln() } else { 0.0 };
                        cost_j(kk, ctx) + barrier
                    };
                    // central-difference gradient, box-projected steps
                    let h1 = 1e-6 * (k1b[1] - k1b[0]).max(1e-6);
                    let h2 = 1e-6 * (k2b[1] - k2b[0]).max(1e-6);
                    let clamp = |kk: TrajectoryParam| TrajectoryParam {
                        k1: kk.k1.clamp(k1b[0], k1b[1]),
                        k2: kk.k2.clamp(k2b[0], k2b[1]),
                    };
                    let g1 = (phi(clamp(TrajectoryParam { k1: k.k1 + h1, ..k }), &mut evals)
                        - phi(clamp(TrajectoryParam { k1: k.k1 - h1, ..k }), &mut evals))
                        / (2.0 * h1);
                    let g2 = (phi(clamp(TrajectoryParam { k2: k.k2 + h2, ..k }), &mut evals)
                        - phi(clamp(TrajectoryParam { k2: k.k2 - h2, ..k }), &mut evals))
                        / (2.0 * h2);
                    if !g1.is_finite() || !g2.is_finite() {
                        break;
                    }
                    // BFGS-style inverse Hessian update
                    if let Some(pg) = prev_grad {
                        let y = [g1 - pg[0], g2 - pg[1]];
                        let s = prev_step;
                        let sy = s[0] * y[0] + s[1] * y[1];
                        if sy > 1e-12 {
                            let rho = 1.0 / sy;
                            // two-loop-free rank-2 update for the 2x2 case
                            let hy = [
                                h_inv[0][0] * y[0] + h_inv[0][1] * y[1],
                                h_inv[1][0] * y[0] + h_inv[1][1] * y[1],
                            ];
                            let yhy = y[0] * hy[0] + y[1] * hy[1];
                            let c1 = (1.0 + rho * yhy) * rho;
                            for a in 0..2 {
                                for b in 0..2 {
                                    h_inv[a][b] += c1 * s[a] * s[b]
                                        - rho * (hy[a] * s[b] + s[a] * hy[b]);
                                }
                            }
                        }
                    }
                    let mut step = [
                        -(h_inv[0][0] * g1 + h_inv[0][1] * g2),
                        -(h_inv[1][0] * g1 + h_inv[1][1] * g2),
                    ];
                    // backtracking line search on phi
                    let phi0 = phi(k, &mut evals);
                    let mut accepted = false;
                    for _bt in 0..8 {
                        let cand = clamp(TrajectoryParam {
                            k1: k.k1 + step[0],
                            k2: k.k2 + step[1],
                        });
                        if phi(cand, &mut evals) < phi0 {
                            prev_grad = Some([g1, g2]);
                            prev_step = [cand.k1 - k.k1, cand.k2 - k.k2];
                            k = cand;
                            accepted = true;
                            break;
                        }
                        step[0] *= 0.5;
                        step[1] *= 0.5;
                    }
                    if !accepted {
                        break;
                    }
                }
                mu *= 1e-2;
            }
            // exact feasibility recheck of the refined point
            let col = ctx.frs.collapse(k);
            evals += 1;
            let w = if ctx.xp.is_empty() {
                f64::NEG_INFINITY
            } else {
                max_constraint(&col, &ctx.xp, None)
            };
            if w <= threshold {
                let j = cost_j(k, ctx);
                if j < best.0 {
                    best = (j, k, w);
                }
            }
        }
    }

    let _ = budget_hit;
    Ok(PlanResult {
        outcome: PlanOutcome::NewPlan(best.1),
        solve_time: t0.elapsed().as_secs_f64(),
        max_w: Some(best.2),
        cost: Some(best.0),
        evals,
    })
}

/// Constrained brute-force grid minimum (oracle for the solver).
pub fn brute_force_grid(ctx: &PlanningContext, n: usize) -> Option<(TrajectoryParam, f64)> {
    let (k1b, k2b) = ctx.bounds()?;
    let threshold = 1.0 - ctx.cfg.delta_safe;
    let lin = |b: [f64; 2], i: usize| b[0] + (b[1] - b[0]) * i as f64 / (n - 1) as f64;
    let mut best: Option<(TrajectoryParam, f64)> = None;
    for i1 in 0..n {
        for i2 in 0..n {
            let k = TrajectoryParam { k1: lin(k1b, i1), k2: lin(k2b, i2) };
            let col = ctx.frs.collapse(k);
            let w = if ctx.xp.is_empty() {
                f64::NEG_INFINITY
            } else {
                ctx.xp.iter().map(|&z| col.eval(z)).fold(f64::NEG_INFINITY, f64::max)
            };
            if w <= threshold {
                let j = cost_j(k, ctx);
                if best.map(|(_, bj)| j < bj).unwrap_or(true) {
                    best = Some((k, j));
                }
            }
        }
    }
    best
}

/// Rigid transform from world coordinates into the plan-local frame of a
/// pose (center of mass at the origin, heading along +x).
pub fn to_plan_frame(position: Point2, heading: f64) -> Transform2 {
    Transform2::world_to_frame(position, heading)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_formula_matches_quoted_value() {
        let t = compute_horizon(0.5, 15.4, 11.0);
        assert!((t - 1.9).abs() < 1e-12, "T = {t}");
        assert_eq!(compute_horizon(0.5, 0.0, 11.0), 0.5);
    }

    #[test]
    fn sensor_horizon_formula() {
        let d = compute_sensor_horizon(1.9, 0.5, 11.0, 0.12, 0.15);
        let expect = 2.4 * 11.0 + 2.0 * (0.12f64 * 0.12 + 0.15 * 0.15).sqrt();
        assert!((d - expect).abs() < 1e-12);
        assert!((d - 26.784).abs() < 1e-3);
        // eps = 0 and T = tau_plan degenerates to 2 tau v
        assert_eq!(compute_sensor_horizon(0.5, 0.5, 10.0, 0.0, 0.0), 10.0);
    }

    #[test]
    fn plan_frame_round_trip_and_orientation() {
        use rand::Rng;
        let tf = to_plan_frame(pt(12.0, -7.0), 1.1);
        let inv = tf.inverse();
        let mut rng = crate::rng::child_rng(2, "frame", 0);
        for _ in 0..1000 {
            let p = pt(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
            assert!(inv.apply(tf.apply(p)).dist(p) < 1e-12);
        }
        // identity pose gives the identity transform
        let id = to_plan_frame(pt(0.0, 0.0), 0.0);
        let p = pt(3.0, 4.0);
        assert_eq!(id.apply(p), p);
        // obstacle ahead-left lands at positive y for a heading-aligned pose
        let tf = to_plan_frame(pt(5.0, 5.0), std::f64::consts::FRAC_PI_4);
        let ahead_left = pt(5.0, 5.0)
            + pt(
                (std::f64::consts::FRAC_PI_4 + 0.3).cos(),
                (std::f64::consts::FRAC_PI_4 + 0.3).sin(),
            ) * 10.0;
        let local = tf.apply(ahead_left);
        assert!(local.x > 0.0 && local.y > 0.0, "{local:?}");
    }
}
