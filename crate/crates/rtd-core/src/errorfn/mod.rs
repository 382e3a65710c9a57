//! Tracking-error functions: degree-2 polynomials `g_x(t)`, `g_y(t)` per
//! speed range that upper-bound the rate at which tracking error accumulates
//! while the closed-loop plant follows a commanded parameter.
//!
//! Samples come from plant rollouts with randomized parameters, initial
//! conditions and estimation offsets; the envelope is the minimum-integral
//! quadratic dominating every sample (a small LP), inflated by a margin and
//! validated on held-out rollouts.

mod lp;

pub use lp::solve_min_geq;

use crate::geom::{pt, Point2, Transform2};
use crate::pipeline::PipelineContext;
use crate::reference::{steady_state_vy, tracking_reference, DesiredTrajectory, TrajectoryParam};
use crate::rng::{child_rng, derive_seed};
use crate::vehicle::{footprint_corner_offsets, PerturbationDraw, Plant, VehicleState};
use crate::{exec, Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fitted tracking-error rate bound for one speed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunction {
    pub speed_range: (f64, f64),
    /// `g_x(t) = c0 + c1 t + c2 t^2`.
    pub coeffs_x: [f64; 3],
    pub coeffs_y: [f64; 3],
    /// Largest `t` the fit covers (s).
    pub horizon: f64,
    /// Multiplicative inflation applied after fitting.
    pub margin_frac: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub n_k: usize,
    pub n_ic: usize,
    pub n_samples: usize,
}

impl ErrorFunction {
    pub fn zero(speed_range: (f64, f64)) -> Self {
        ErrorFunction {
            speed_range,
            coeffs_x: [0.0; 3],
            coeffs_y: [0.0; 3],
            horizon: f64::INFINITY,
            margin_frac: 0.0,
            provenance: Provenance::default(),
        }
    }

    pub fn from_coeffs(
        speed_range: (f64, f64),
        coeffs_x: [f64; 3],
        coeffs_y: [f64; 3],
        horizon: f64,
    ) -> Self {
        ErrorFunction {
            speed_range,
            coeffs_x,
            coeffs_y,
            horizon,
            margin_frac: 0.0,
            provenance: Provenance::default(),
        }
    }

    pub fn gx(&self, t: f64) -> f64 {
        self.coeffs_x[0] + self.coeffs_x[1] * t + self.coeffs_x[2] * t * t
    }

    pub fn gy(&self, t: f64) -> f64 {
        self.coeffs_y[0] + self.coeffs_y[1] * t + self.coeffs_y[2] * t * t
    }

    /// `∫_0^t g_x`.
    pub fn integral_gx(&self, t: f64) -> f64 {
        self.coeffs_x[0] * t + self.coeffs_x[1] * t * t / 2.0 + self.coeffs_x[2] * t * t * t / 3.0
    }

    pub fn integral_gy(&self, t: f64) -> f64 {
        self.coeffs_y[0] * t + self.coeffs_y[1] * t * t / 2.0 + self.coeffs_y[2] * t * t * t / 3.0
    }

    pub fn defined_at(&self, t: f64) -> bool {
        t <= self.horizon + 1e-9
    }

    /// Both components scaled by a factor (used by conservatism checks).
    pub fn scaled(&self, factor: f64) -> ErrorFunction {
        let mut out = self.clone();
        for c in out.coeffs_x.iter_mut().chain(out.coeffs_y.iter_mut()) {
            *c *= factor;
        }
        out
    }

    pub fn nonneg_on_grid(&self, n: usize) -> bool {
        (0..=n).all(|i| {
            let t = self.horizon * i as f64 / n as f64;
            self.gx(t) >= 0.0 && self.gy(t) >= 0.0
        })
    }
}

/// One absolute error-rate sample (m/s) at a time within the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub t: f64,
    pub rate_x: f64,
    pub rate_y: f64,
}

/// Description of the distribution the samples were drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBands {
    /// Initial speed band (m/s).
    pub speed: (f64, f64),
    /// Initial yaw-rate band (rad/s).
    pub yaw: (f64, f64),
    /// Estimation-offset band applied to the reference pose (m).
    pub pose_eps: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSampleSet {
    pub speed_range: (f64, f64),
    pub horizon: f64,
    pub samples: Vec<ErrorSample>,
    pub bands: SampleBands,
    pub seed: u64,
}

/// Error time series of one closed-loop rollout, measured in the plan-local
/// frame on the worst footprint point (four corners plus center).
pub(crate) struct RolloutErrors {
    /// step times (s), one per integration step
    pub times: Vec<f64>,
    /// worst |error| per component at each step time
    pub abs_err: Vec<(f64, f64)>,
    /// worst |d/dt error| per component at each step midpoint,
    /// measured along the desired path
    pub path_rate: Vec<(f64, f64)>,
    /// worst |zdot - field(z)| per component at each step midpoint
    pub field_rate: Vec<(f64, f64)>,
}

fn body_offsets(ctx: &PipelineContext) -> [Point2; 5] {
    let c = footprint_corner_offsets(&ctx.params);
    [c[0], c[1], c[2], c[3], pt(0.0, 0.0)]
}

/// Roll the plant tracking `k` from a randomized initial condition and
/// measure tracking-error rates against the exact desired trajectory.
pub(crate) fn roll_tracking_errors(
    ctx: &PipelineContext,
    speed_range: (f64, f64),
    horizon: f64,
    seed: u64,
    index: u64,
) -> RolloutErrors {
    let mut rng = child_rng(seed, "error-rollout", index);
    let planner = &ctx.cfg.planner;
    let (lo, hi) = speed_range;

    let k = TrajectoryParam {
        k1: rng.gen_range(-planner.k1_limit..=planner.k1_limit),
        k2: rng.gen_range(lo..=hi),
    };
    let v0 = rng
        .gen_range((lo - planner.dk2_limit).max(0.5)..=(hi + planner.dk2_limit));
    let omega0 = rng.gen_range(-planner.k1_limit..=planner.k1_limit);
    let vy0 = steady_state_vy(TrajectoryParam { k1: omega0, k2: v0 }, &ctx.params);
    let state0 = VehicleState { vx: v0, vy: vy0, omega: omega0, ..Default::default() };

    // estimation error enters as an offset of the controller's reference
    let eps_dx = ctx.eps.eps_x();
    let eps_dy = ctx.eps.eps_y();
    let offset = pt(
        rng.gen_range(-eps_dx..=eps_dx.max(1e-12)),
        rng.gen_range(-eps_dy..=eps_dy.max(1e-12)),
    );
    let dt = ctx.cfg.sim.dt;
    let reference = tracking_reference(k, &ctx.params, horizon, dt)
        .transformed(&Transform2 { angle: 0.0, translation: offset });

    let draw = PerturbationDraw::sample(&ctx.cfg.plant, derive_seed(seed, "plant", index), 0);
    let mut plant = Plant::new(&ctx.params, &ctx.act, draw, state0);

    let des = DesiredTrajectory::new(k, &ctx.params, pt(0.0, 0.0));
    let offsets = body_offsets(ctx);
    let start_points = offsets.map(|o| state0.body_point(o));

    let n = (horizon / dt).round() as usize;
    let mut times = Vec::with_capacity(n);
    let mut abs_err = Vec::with_capacity(n);
    let mut path_rate = Vec::with_capacity(n);
    let mut field_rate = Vec::with_capacity(n);

    let mut prev_pts = start_points;
    let mut prev_err: Vec<Point2> =
        (0..5).map(|i| prev_pts[i] - des.point_at(0.0, start_points[i])).collect();
    for i in 0..n {
        let t0 = i as f64 * dt;
        let t1 = t0 + dt;
        let cmd = ctx.controller.command(&plant.state, &reference, t0);
        plant.step(cmd, dt).expect("error rollout stays finite");

        let cur_pts = offsets.map(|o| plant.state.body_point(o));
        let mut worst_abs = (0.0f64, 0.0f64);
        let mut worst_path = (0.0f64, 0.0f64);
        let mut worst_field = (0.0f64, 0.0f64);
        for p in 0..5 {
            let err = cur_pts[p] - des.point_at(t1, start_points[p]);
            worst_abs.0 = worst_abs.0.max(err.x.abs());
            worst_abs.1 = worst_abs.1.max(err.y.abs());
            let de = (err - prev_err[p]) * (1.0 / dt);
            worst_path.0 = worst_path.0.max(de.x.abs());
            worst_path.1 = worst_path.1.max(de.y.abs());
            let vel = (cur_pts[p] - prev_pts[p]) * (1.0 / dt);
            let mid = (cur_pts[p] + prev_pts[p]) * 0.5;
            let dev = vel - des.field(mid);
            worst_field.0 = worst_field.0.max(dev.x.abs());
            worst_field.1 = worst_field.1.max(dev.y.abs());
            prev_err[p] = err;
        }
        prev_pts = cur_pts;
        times.push(t1);
        abs_err.push(worst_abs);
        path_rate.push(worst_path);
        field_rate.push(worst_field);
    }
    RolloutErrors { times, abs_err, path_rate, field_rate }
}

/// Collect error-rate samples over `n_k * n_ic` randomized closed-loop
/// rollouts for one speed range.
pub fn collect_error_samples(
    ctx: &PipelineContext,
    speed_range: (f64, f64),
    horizon: f64,
    n_k: usize,
    n_ic: usize,
    seed: u64,
) -> Result<ErrorSampleSet> {
    if n_k == 0 || n_ic == 0 {
        return Err(Error::invalid("collect_error_samples: n_k and n_ic must be > 0"));
    }
    if !(speed_range.0 < speed_range.1) {
        return Err(Error::invalid("collect_error_samples: empty speed band"));
    }
    let total = n_k * n_ic;
    let per_rollout = exec::map_indexed(total, |i| {
        let r = roll_tracking_errors(ctx, speed_range, horizon, seed, i as u64);
        let dt = ctx.cfg.sim.dt;
        r.times
            .iter()
            .zip(r.path_rate.iter().zip(r.field_rate.iter()))
            .map(|(t, (p, f))| ErrorSample {
                t: (t - 0.5 * dt).max(0.0),
                rate_x: p.0.max(f.0),
                rate_y: p.1.max(f.1),
            })
            .collect::<Vec<_>>()
    });
    let samples: Vec<ErrorSample> = per_rollout.into_iter().flatten().collect();
    let planner = &ctx.cfg.planner;
    Ok(ErrorSampleSet {
        speed_range,
        horizon,
        samples,
        bands: SampleBands {
            speed: (
                (speed_range.0 - planner.dk2_limit).max(0.5),
                speed_range.1 + planner.dk2_limit,
            ),
            yaw: (-planner.k1_limit, planner.k1_limit),
            pose_eps: (ctx.eps.eps_x(), ctx.eps.eps_y()),
        },
        seed,
    })
}

/// Fit the minimum-integral quadratic envelope above every sample, keep it
/// nonnegative on a dense grid, inflate by `margin_frac`, and lift to the
/// configured floor. Every fitting sample ends up on or below the curve.
pub fn fit_error_function(
    samples: &ErrorSampleSet,
    margin_frac: f64,
    floor: f64,
    grid_points: usize,
) -> Result<ErrorFunction> {
    if samples.samples.len() < 2 {
        return Err(Error::invalid("fit_error_function: need at least 2 samples"));
    }
    let horizon = samples.horizon;
    let fit_component = |select: &dyn Fn(&ErrorSample) -> f64| -> Result<[f64; 3]> {
        let max_rate = samples.samples.iter().map(select).fold(0.0f64, f64::max);
        if max_rate < 1e-12 {
            return Ok([0.0; 3]);
        }
        let mut rows: Vec<[f64; 3]> = Vec::with_capacity(samples.samples.len() + grid_points + 1);
        let mut rhs: Vec<f64> = Vec::with_capacity(rows.capacity());
        for s in &samples.samples {
            rows.push([1.0, s.t, s.t * s.t]);
            rhs.push(select(s));
        }
        for i in 0..=grid_points {
            let t = horizon * i as f64 / grid_points as f64;
            rows.push([1.0, t, t * t]);
            rhs.push(0.0);
        }
        let c = [horizon, horizon * horizon / 2.0, horizon * horizon * horizon / 3.0];
        let mut coeffs = match lp::solve_min_geq(c, &rows, &rhs) {
            Ok(a) => a,
            Err(e) => {
                log::warn!("envelope LP failed ({e}); falling back to constant bound");
                [max_rate, 0.0, 0.0]
            }
        };
        for v in coeffs.iter_mut() {
            *v *= 1.0 + margin_frac;
        }
        // exact dominance lift
        let eval = |a: &[f64; 3], t: f64| a[0] + a[1] * t + a[2] * t * t;
        let deficit = samples
            .samples
            .iter()
            .map(|s| select(s) - eval(&coeffs, s.t))
            .fold(0.0f64, f64::max);
        if deficit > 0.0 {
            coeffs[0] += deficit;
        }
        Ok(coeffs)
    };

    let mut coeffs_x = fit_component(&|s| s.rate_x)?;
    let mut coeffs_y = fit_component(&|s| s.rate_y)?;

    // lift to the floor (covers the all-zero degenerate case: g ≡ floor)
    for coeffs in [&mut coeffs_x, &mut coeffs_y] {
        let min_val = (0..=grid_points.max(1))
            .map(|i| {
                let t = horizon * i as f64 / grid_points.max(1) as f64;
                coeffs[0] + coeffs[1] * t + coeffs[2] * t * t
            })
            .fold(f64::INFINITY, f64::min);
        if min_val < floor {
            coeffs[0] += floor - min_val;
        }
    }

    Ok(ErrorFunction {
        speed_range: samples.speed_range,
        coeffs_x,
        coeffs_y,
        horizon,
        margin_frac,
        provenance: Provenance {
            seed: samples.seed,
            n_k: 0,
            n_ic: 0,
            n_samples: samples.samples.len(),
        },
    })
}

/// Hold-out validation of the accumulated-error bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_rollouts: usize,
    /// Fraction of rollouts whose accumulated error stays within the
    /// integral bound at every sample time; `None` when no rollouts ran.
    pub coverage: Option<f64>,
    /// Worst exceedance of the integral bound (m), 0 when fully covered.
    pub worst_violation: f64,
    /// Rollouts whose rates stay pointwise below `g`.
    pub pointwise_ok: usize,
    /// Max |d| of the reconstructed disturbance over pointwise-covered
    /// rollouts.
    pub max_reconstructed_d: f64,
}

/// Check `|error_i(t)| <= ∫_0^t g_i` on fresh rollouts and reconstruct the
/// disturbance that realizes each rollout in the tracking model.
pub fn validate_lemma1(
    ctx: &PipelineContext,
    g: &ErrorFunction,
    n_rollouts: usize,
    seed: u64,
) -> CoverageReport {
    if n_rollouts == 0 {
        return CoverageReport {
            n_rollouts: 0,
            coverage: None,
            worst_violation: 0.0,
            pointwise_ok: 0,
            max_reconstructed_d: 0.0,
        };
    }
    let dt = ctx.cfg.sim.dt;
    let per = exec::map_indexed(n_rollouts, |i| {
        let r = roll_tracking_errors(ctx, g.speed_range, g.horizon, seed, i as u64);
        let mut integral_ok = true;
        let mut worst = 0.0f64;
        let mut pointwise = true;
        let mut d_max = 0.0f64;
        for (j, t) in r.times.iter().enumerate() {
            let (ex, ey) = r.abs_err[j];
            let vx = ex - g.integral_gx(*t);
            let vy = ey - g.integral_gy(*t);
            if vx > 1e-9 || vy > 1e-9 {
                integral_ok = false;
            }
            worst = worst.max(vx).max(vy);
            let tm = (t - 0.5 * dt).max(0.0);
            let (px, py) = r.path_rate[j];
            let (fx, fy) = r.field_rate[j];
            if px > g.gx(tm) + 1e-9
                || fx > g.gx(tm) + 1e-9
                || py > g.gy(tm) + 1e-9
                || fy > g.gy(tm) + 1e-9
            {
                pointwise = false;
            }
            d_max = d_max.max(fx / g.gx(tm)).max(fy / g.gy(tm));
        }
        (integral_ok, worst, pointwise, d_max)
    });
    let covered = per.iter().filter(|r| r.0).count();
    let pointwise_ok = per.iter().filter(|r| r.2).count();
    let max_d = per
        .iter()
        .filter(|r| r.2)
        .map(|r| r.3)
        .fold(0.0f64, f64::max);
    CoverageReport {
        n_rollouts,
        coverage: Some(covered as f64 / n_rollouts as f64),
        worst_violation: per.iter().map(|r| r.1).fold(0.0f64, f64::max),
        pointwise_ok,
        max_reconstructed_d: max_d,
    }
}
