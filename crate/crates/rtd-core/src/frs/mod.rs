//! Forward reachable sets as polynomial level sets.
//!
//! For each speed range, trajectories of the disturbance-augmented tracking
//! model (plus plant braking envelopes) are sampled into a point cloud over
//! `(x, y, k1, k2)`; a degree-`2 alpha` polynomial `w` is least-squares fit
//! to separate the dilated cloud from its complement, then shifted until
//! `w >= 1` on every cloud point. Containment is audited on held-out clouds
//! and on full braking rollouts. The 1-superlevel set of `w` stands in for
//! the reachable set everywhere downstream: obstacles map to constraints via
//! `w(z, k) >= 1`.

mod contour;
mod poly;

pub use contour::marching_squares;
pub use poly::{
    collapse_k, eval_scaled, eval_scaled_naive, full_basis, symmetric_basis, CollapsedPoly,
    Exponents, ScaleBox,
};

use crate::errorfn::ErrorFunction;
use crate::exec;
use crate::geom::{pt, Point2, Transform2};
use crate::pipeline::PipelineContext;
use crate::reference::{
    braking_reference, steady_state_vy, tracking_model_rollout, DesiredTrajectory,
    DisturbanceSignal, ParamBox, TrajectoryParam,
};
use crate::rng::{child_rng, derive_seed};
use crate::vehicle::{footprint_corner_offsets, PerturbationDraw, Plant, VehicleState};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Spatial bounds of the fit domain (plan-local frame).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

/// Audit metadata carried inside every reachable-set file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrsAudit {
    pub seed: u64,
    pub n_holdout: usize,
    /// Hold-out containment fraction.
    pub containment: f64,
    /// Fitting-cloud containment (1.0 by construction of the shift).
    pub fit_containment: f64,
    /// Stopping distance from the range's top speed (m), and the planning
    /// budget, recorded for the horizon check `T >= tau_plan + D_stop/v_hi`.
    pub d_stop: f64,
    pub tau_plan: f64,
    pub assumption4_trials: usize,
    pub assumption4_violations: usize,
    /// True for externally computed coefficient files (import hook).
    pub external: bool,
}

/// Polynomial over-approximation of one speed range's reachable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrsPolynomial {
    pub alpha: u32,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub speed_range: (f64, f64),
    pub param_box: ParamBox,
    /// Exponent tuples over scaled `(x, y, k1, k2)`.
    pub monomials: Vec<Exponents>,
    pub coefficients: Vec<f64>,
    /// Tracking-error function the cloud was sampled with.
    pub g: ErrorFunction,
    pub domain_box: DomainBox,
    pub audit: FrsAudit,
}

impl FrsPolynomial {
    pub fn scale_box(&self) -> ScaleBox {
        ScaleBox::new(
            self.domain_box.x,
            self.domain_box.y,
            (self.param_box.k1_min, self.param_box.k1_max),
            (self.param_box.k2_min, self.param_box.k2_max),
        )
    }

    /// Structural invariants plus the persistent-feasibility horizon check.
    pub fn validate(&self) -> Result<()> {
        if self.monomials.len() != self.coefficients.len() {
            return Err(Error::invalid("frs: |monomials| != |coefficients|"));
        }
        let deg = (2 * self.alpha) as u16;
        if self
            .monomials
            .iter()
            .any(|e| e.iter().map(|&v| v as u16).sum::<u16>() > deg)
        {
            return Err(Error::invalid("frs: monomial degree exceeds 2*alpha"));
        }
        if !self.scale_box().is_mirror_symmetric() {
            return Err(Error::invalid("frs: domain/param boxes must be mirror symmetric"));
        }
        if (self.param_box.k2_min, self.param_box.k2_max)
            != (self.speed_range.0, self.speed_range.1)
        {
            return Err(Error::invalid("frs: param box k2 interval must equal speed range"));
        }
        let v_hi = self.speed_range.1;
        let needed = self.audit.tau_plan + self.audit.d_stop / v_hi;
        if self.horizon + 1e-9 < needed {
            return Err(Error::Audit(format!(
                "frs horizon {} shorter than tau_plan + D_stop/v_hi = {needed}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Evaluate `w(z, k)`; points outside the boxes are clamped.
    pub fn eval(&self, z: Point2, k: TrajectoryParam) -> f64 {
        self.eval_flagged(z, k).0
    }

    /// Evaluation plus a flag marking out-of-box (clamped) queries.
    pub fn eval_flagged(&self, z: Point2, k: TrajectoryParam) -> (f64, bool) {
        let (u, clamped) = self.scale_box().scale([z.x, z.y, k.k1, k.k2]);
        (eval_scaled(&self.monomials, &self.coefficients, u), clamped)
    }

    /// Fold the parameter into a 2-variable polynomial for repeated spatial
    /// evaluation.
    pub fn collapse(&self, k: TrajectoryParam) -> CollapsedPoly {
        collapse_k(&self.monomials, &self.coefficients, &self.scale_box(), k.k1, k.k2)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<FrsPolynomial> {
        let text = std::fs::read_to_string(path)?;
        let frs: FrsPolynomial = serde_json::from_str(&text)?;
        frs.validate()?;
        Ok(frs)
    }
}

/// Points swept by sampled tracking-model and braking trajectories, in the
/// plan-local frame, closed under the `(y, k1)` mirror symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachSampleCloud {
    pub speed_range: (f64, f64),
    pub horizon: f64,
    /// `(x, y, k1, k2)` samples.
    pub points: Vec<[f64; 4]>,
    /// Distinct parameter values present (pre-mirror grid plus mirrors).
    pub k_values: Vec<(f64, f64)>,
    pub seed: u64,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Up to nine initial points spanning the footprint: center first, then
/// corners, then edge midpoints.
fn footprint_seed_points(ctx: &PipelineContext, n_z0: usize) -> Vec<Point2> {
    let c = footprint_corner_offsets(&ctx.params);
    let mut pts = vec![pt(0.0, 0.0), c[0], c[1], c[2], c[3]];
    for i in 0..4 {
        pts.push((c[i] + c[(i + 1) % 4]) * 0.5);
    }
    pts.truncate(n_z0.clamp(1, 9));
    pts
}

/// Sample the reachable cloud for one speed range: tracking-model sweeps
/// under extremal disturbances from every footprint seed point, plus plant
/// rollouts that track the parameter and brake from `tau_plan`, mirrored in
/// `(y, k1)`.
#[allow(clippy::too_many_arguments)]
pub fn sample_reachable_cloud(
    ctx: &PipelineContext,
    g: &ErrorFunction,
    pbox: &ParamBox,
    horizon: f64,
    n_k1: usize,
    n_k2: usize,
    n_z0: usize,
    n_d: usize,
    n_brake: usize,
    seed: u64,
) -> Result<ReachSampleCloud> {
    if n_k1 == 0 || n_k2 == 0 || n_d == 0 || n_z0 == 0 {
        return Err(Error::invalid("sample_reachable_cloud: zero sample counts"));
    }
    if !g.defined_at(horizon) {
        return Err(Error::invalid("sample_reachable_cloud: g undefined over the horizon"));
    }
    let dt = ctx.cfg.frs.dt;
    let grid_dt = ctx.cfg.trajectory.disturbance_grid;
    let k1s = linspace(pbox.k1_min, pbox.k1_max, n_k1);
    let k2s = linspace(pbox.k2_min, pbox.k2_max, n_k2);
    let mut ks: Vec<TrajectoryParam> = k1s
        .iter()
        .flat_map(|&k1| k2s.iter().map(move |&k2| TrajectoryParam { k1, k2 }))
        .collect();
    // random interior parameters pin the fit between grid values
    {
        let mut rng = child_rng(seed, "cloud-k-extra", 0);
        for _ in 0..(n_k1 * n_k2 / 2) {
            ks.push(TrajectoryParam {
                k1: rng.gen_range(pbox.k1_min..=pbox.k1_max),
                k2: rng.gen_range(pbox.k2_min..=pbox.k2_max),
            });
        }
    }
    let seeds = footprint_seed_points(ctx, n_z0);

    // tracking-model sweeps
    let tracking: Vec<Vec<[f64; 4]>> = exec::map_indexed(ks.len(), |ki| {
        let k = ks[ki];
        let des = DesiredTrajectory::new(k, &ctx.params, pt(0.0, 0.0));
        let mut out = Vec::new();
        for (zi, &z0) in seeds.iter().enumerate() {
            for di in 0..n_d {
                let d = match di {
                    0 => DisturbanceSignal::constant(1.0, 1.0, horizon, grid_dt),
                    1 => DisturbanceSignal::constant(-1.0, -1.0, horizon, grid_dt),
                    2 => DisturbanceSignal::constant(1.0, -1.0, horizon, grid_dt),
                    3 => DisturbanceSignal::constant(-1.0, 1.0, horizon, grid_dt),
                    _ => {
                        let mut rng = child_rng(
                            seed,
                            "cloud-d",
                            (ki * seeds.len() * n_d + zi * n_d + di) as u64,
                        );
                        DisturbanceSignal::bang_bang(&mut rng, horizon, grid_dt)
                    }
                };
                let roll = tracking_model_rollout(z0, &des, &d, g, horizon, dt);
                // every 2nd step: gaps stay well under the dilation radius
                for (step, (_, z)) in roll.iter().enumerate() {
                    if step % 2 == 0 {
                        out.push([z.x, z.y, k.k1, k.k2]);
                    }
                }
            }
        }
        out
    });

    // plant braking envelopes
    let braking: Vec<Vec<[f64; 4]>> = exec::map_indexed(ks.len() * n_brake, |idx| {
        let k = ks[idx / n_brake];
        roll_plant_brake_points(ctx, k, seed, idx as u64, 2)
    });

    let mut points: Vec<[f64; 4]> = Vec::new();
    for part in tracking.into_iter().chain(braking) {
        points.extend(part);
    }
    // mirror closure (negating zero would split hash keys by sign bit)
    let neg = |v: f64| if v == 0.0 { 0.0 } else { -v };
    let mirrored: Vec<[f64; 4]> = points.iter().map(|p| [p[0], neg(p[1]), neg(p[2]), p[3]]).collect();
    points.extend(mirrored);

    let mut k_values: Vec<(f64, f64)> = ks.iter().map(|k| (k.k1, k.k2)).collect();
    for k in &ks {
        let m = (neg(k.k1), k.k2);
        if !k_values.iter().any(|v| v.0.to_bits() == m.0.to_bits() && v.1.to_bits() == m.1.to_bits()) {
            k_values.push(m);
        }
    }
    Ok(ReachSampleCloud { speed_range: (pbox.k2_min, pbox.k2_max), horizon, points, k_values, seed })
}

/// Footprint-corner positions swept by one plant rollout that tracks `k`
/// and brakes from `tau_plan`, every `stride` steps.
fn roll_plant_brake_points(
    ctx: &PipelineContext,
    k: TrajectoryParam,
    seed: u64,
    index: u64,
    stride: usize,
) -> Vec<[f64; 4]> {
    let mut rng = child_rng(seed, "cloud-brake", index);
    let planner = &ctx.cfg.planner;
    let lo = (k.k2 - planner.dk2_limit).max(0.5);
    let hi = k.k2 + planner.dk2_limit;
    let v0 = rng.gen_range(lo..hi);
    let omega0 = rng.gen_range(-planner.k1_limit..=planner.k1_limit);
    let vy0 = steady_state_vy(TrajectoryParam { k1: omega0, k2: v0 }, &ctx.params);
    let state0 = VehicleState { vx: v0, vy: vy0, omega: omega0, ..Default::default() };

    let eps = (ctx.eps.eps_x(), ctx.eps.eps_y());
    let offset = pt(
        rng.gen_range(-eps.0..=eps.0.max(1e-12)),
        rng.gen_range(-eps.1..=eps.1.max(1e-12)),
    );
    let dt = ctx.cfg.sim.dt;
    let reference = braking_reference(
        k,
        planner.tau_plan,
        &ctx.params,
        ctx.cfg.trajectory.a_max_brake,
        dt,
    )
    .transformed(&Transform2 { angle: 0.0, translation: offset });

    let draw = PerturbationDraw::sample(&ctx.cfg.plant, derive_seed(seed, "cloud-brake-plant", index), 0);
    let mut plant = Plant::new(&ctx.params, &ctx.act, draw, state0);
    let corners = footprint_corner_offsets(&ctx.params);

    let mut out = Vec::new();
    for off in corners {
        let p = plant.state.body_point(off);
        out.push([p.x, p.y, k.k1, k.k2]);
    }
    let max_steps = (40.0 / dt) as usize;
    for i in 0..max_steps {
        let t = i as f64 * dt;
        let cmd = ctx.controller.command(&plant.state, &reference, t);
        if plant.step(cmd, dt).is_err() {
            break;
        }
        if i % stride == 0 {
            for off in corners {
                let p = plant.state.body_point(off);
                out.push([p.x, p.y, k.k1, k.k2]);
            }
        }
        if t > reference.duration() && plant.state.vx < ctx.cfg.sim.stop_speed {
            break;
        }
    }
    out
}

/// Grid hash over `(k index, x cell, y cell)` for near-cloud rejection.
struct CloudHash {
    cell: f64,
    map: std::collections::HashMap<(usize, i64, i64), Vec<u32>>,
}

impl CloudHash {
    fn build(cloud: &ReachSampleCloud, cell: f64) -> Self {
        let mut k_index = std::collections::HashMap::new();
        for (i, k) in cloud.k_values.iter().enumerate() {
            k_index.insert((k.0.to_bits(), k.1.to_bits()), i);
        }
        let mut map: std::collections::HashMap<(usize, i64, i64), Vec<u32>> =
            std::collections::HashMap::new();
        for (pi, p) in cloud.points.iter().enumerate() {
            let ki = k_index[&(p[2].to_bits(), p[3].to_bits())];
            let key = (ki, (p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
            map.entry(key).or_default().push(pi as u32);
        }
        CloudHash { cell, map }
    }

    fn near(&self, cloud: &ReachSampleCloud, ki: usize, x: f64, y: f64, radius: f64) -> bool {
        let cx = (x / self.cell).floor() as i64;
        let cy = (y / self.cell).floor() as i64;
        let reach = (radius / self.cell).ceil() as i64;
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(list) = self.map.get(&(ki, cx + dx, cy + dy)) {
                    for &pi in list {
                        let p = cloud.points[pi as usize];
                        let ddx = p[0] - x;
                        let ddy = p[1] - y;
                        if ddx * ddx + ddy * ddy <= r2 {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Fit `w` to a sampled cloud: least squares toward `1 + delta` on dilated
/// cloud points and `1 - delta` on uniform negatives away from the cloud,
/// reweighted toward containment, then shifted until `w >= 1` on every
/// cloud point. Containment is audited on a fresh hold-out cloud; a fit
/// below the threshold is rejected (raise `alpha` or `r_inflate`).
pub fn fit_w(
    ctx: &PipelineContext,
    cloud: &ReachSampleCloud,
    g: &ErrorFunction,
    pbox: &ParamBox,
    alpha: u32,
    d_stop: f64,
    seed: u64,
) -> Result<FrsPolynomial> {
    if cloud.points.is_empty() {
        return Err(Error::invalid("fit_w: empty cloud"));
    }
    if alpha < 1 {
        return Err(Error::invalid("fit_w: alpha must be >= 1"));
    }
    let fcfg = &ctx.cfg.frs;
    let r_inflate = fcfg.r_inflate;

    // domain box: cloud extent plus margin, y symmetric for the mirror tie
    let (mut x_lo, mut x_hi, mut y_abs) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for p in &cloud.points {
        x_lo = x_lo.min(p[0]);
        x_hi = x_hi.max(p[0]);
        y_abs = y_abs.max(p[1].abs());
    }
    let pad = 3.0 * r_inflate + 2.0;
    let domain_box = DomainBox { x: (x_lo - pad, x_hi + pad), y: (-(y_abs + pad), y_abs + pad) };
    let scale = ScaleBox::new(
        domain_box.x,
        domain_box.y,
        (pbox.k1_min, pbox.k1_max),
        (pbox.k2_min, pbox.k2_max),
    );

    let exps = symmetric_basis(alpha);
    let m = exps.len();
    let const_idx = exps
        .iter()
        .position(|e| *e == [0, 0, 0, 0])
        .expect("basis contains the constant term");

    // training rows: subsampled positives (plus dilation ring), negatives
    let stride = (cloud.points.len() / fcfg.fit_budget).max(1);
    let mut rng = child_rng(seed, "fit-w", 0);
    let mut rows: Vec<([f64; 4], f64, f64)> = Vec::new(); // (raw, target, weight)
    let pos_target = 1.0 + fcfg.delta_fit;
    let neg_target = 1.0 - fcfg.delta_fit;
    let mut n_pos = 0usize;
    for (i, p) in cloud.points.iter().enumerate().step_by(stride) {
        rows.push((*p, pos_target, fcfg.negative_ratio as f64));
        n_pos += 1;
        if i % (2 * stride) == 0 {
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let ring = [p[0] + r_inflate * phi.cos(), p[1] + r_inflate * phi.sin(), p[2], p[3]];
            rows.push((ring, pos_target, fcfg.negative_ratio as f64));
            n_pos += 1;
        }
    }
    let hash = CloudHash::build(cloud, r_inflate.max(0.05));
    let n_neg_target = n_pos * fcfg.negative_ratio;
    let mut n_neg = 0usize;
    let mut attempts = 0usize;
    while n_neg < n_neg_target && attempts < 50 * n_neg_target {
        attempts += 1;
        let ki = rng.gen_range(0..cloud.k_values.len());
        let (k1, k2) = cloud.k_values[ki];
        let x = rng.gen_range(domain_box.x.0..domain_box.x.1);
        let y = rng.gen_range(domain_box.y.0..domain_box.y.1);
        if hash.near(cloud, ki, x, y, r_inflate + 0.15) {
            continue;
        }
        rows.push(([x, y, k1, k2], neg_target, 1.0));
        n_neg += 1;
    }
    if n_neg < n_neg_target / 2 {
        return Err(Error::FitRejected(
            "fit_w: could not draw enough negative samples; enlarge the domain box".into(),
        ));
    }

    // iteratively reweighted normal equations
    let mut weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mut coeffs = vec![0.0; m];
    for round in 0..=fcfg.reweight_rounds {
        let (mut ata, atb) = accumulate_normal_equations(&exps, &scale, &rows, &weights);
        let ridge = 1e-9 * (0..m).map(|i| ata[(i, i)]).sum::<f64>() / m as f64;
        for i in 0..m {
            ata[(i, i)] += ridge;
        }
        let chol = ata
            .cholesky()
            .ok_or_else(|| Error::FitRejected("fit_w: singular normal equations".into()))?;
        coeffs = chol.solve(&atb).iter().copied().collect();
        if round < fcfg.reweight_rounds {
            // boost positives the fit is losing
            for (i, (raw, target, _)) in rows.iter().enumerate() {
                if *target > 1.0 {
                    let (u, _) = scale.scale(*raw);
                    if eval_scaled(&exps, &coeffs, u) < 1.0 + 0.5 * fcfg.delta_fit {
                        weights[i] *= 8.0;
                    }
                }
            }
        }
    }

    // containment shift over the full cloud
    let min_w = cloud
        .points
        .iter()
        .map(|p| {
            let (u, _) = scale.scale(*p);
            eval_scaled(&exps, &coeffs, u)
        })
        .fold(f64::INFINITY, f64::min);
    if min_w < 1.0 {
        coeffs[const_idx] += 1.0 - min_w + 1e-9;
    }

    // hold-out audit on a fresh cloud with a different parameter grid
    let holdout = sample_reachable_cloud(
        ctx,
        g,
        pbox,
        cloud.horizon,
        fcfg.n_k1 + 1,
        fcfg.n_k2 + 1,
        fcfg.n_z0,
        (fcfg.n_d / 2).max(2),
        (fcfg.n_brake / 2).max(2),
        derive_seed(seed, "holdout", 0),
    )?;
    let step = (holdout.points.len() / fcfg.n_holdout).max(1);
    let checked: Vec<[f64; 4]> = holdout.points.iter().step_by(step).copied().collect();
    let contained = checked
        .iter()
        .filter(|p| {
            let (u, _) = scale.scale(**p);
            eval_scaled(&exps, &coeffs, u) >= 1.0
        })
        .count();
    let containment = contained as f64 / checked.len() as f64;
    if containment < fcfg.holdout_threshold {
        return Err(Error::FitRejected(format!(
            "fit_w: hold-out containment {containment:.5} below {}; raise alpha or r_inflate",
            fcfg.holdout_threshold
        )));
    }

    let frs = FrsPolynomial {
        alpha,
        horizon: cloud.horizon,
        speed_range: cloud.speed_range,
        param_box: *pbox,
        monomials: exps,
        coefficients: coeffs,
        g: g.clone(),
        domain_box,
        audit: FrsAudit {
            seed,
            n_holdout: checked.len(),
            containment,
            fit_containment: 1.0,
            d_stop,
            tau_plan: ctx.cfg.planner.tau_plan,
            assumption4_trials: 0,
            assumption4_violations: 0,
            external: false,
        },
    };
    frs.validate()?;
    Ok(frs)
}

fn accumulate_normal_equations(
    exps: &[Exponents],
    scale: &ScaleBox,
    rows: &[([f64; 4], f64, f64)],
    weights: &[f64],
) -> (nalgebra::DMatrix<f64>, nalgebra::DVector<f64>) {
    let m = exps.len();
    let chunk = 4096;
    let n_chunks = rows.len().div_ceil(chunk);
    let partials = exec::map_indexed(n_chunks, |ci| {
        let lo = ci * chunk;
        let hi = (lo + chunk).min(rows.len());
        let mut ata = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut atb = nalgebra::DVector::<f64>::zeros(m);
        let mut phi = vec![0.0; m];
        for r in lo..hi {
            let (raw, target, _) = rows[r];
            let w = weights[r];
            let (u, _) = scale.scale(raw);
            let max_deg =
                exps.iter().map(|e| *e.iter().max().unwrap() as usize).max().unwrap_or(0);
            let mut pows = [[0.0f64; 16]; 4];
            for v in 0..4 {
                pows[v][0] = 1.0;
                for e in 1..=max_deg {
                    pows[v][e] = pows[v][e - 1] * u[v];
                }
            }
            for (j, e) in exps.iter().enumerate() {
                phi[j] = pows[0][e[0] as usize]
                    * pows[1][e[1] as usize]
                    * pows[2][e[2] as usize]
                    * pows[3][e[3] as usize];
            }
            for i in 0..m {
                let wp = w * phi[i];
                atb[i] += wp * target;
                for j in i..m {
                    ata[(i, j)] += wp * phi[j];
                }
            }
        }
        (ata, atb)
    });
    let mut ata = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut atb = nalgebra::DVector::<f64>::zeros(m);
    for (pa, pb) in partials {
        ata += pa;
        atb += pb;
    }
    for i in 0..m {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }
    (ata, atb)
}

/// Rasterized unsafe-parameter mask for a finite spatial point set.
#[derive(Debug, Clone, PartialEq)]
pub struct KMask {
    pub k1s: Vec<f64>,
    pub k2s: Vec<f64>,
    /// Row-major `[k1 index][k2 index]`; true = unsafe.
    pub mask: Vec<bool>,
}

impl KMask {
    pub fn at(&self, i1: usize, i2: usize) -> bool {
        self.mask[i1 * self.k2s.len() + i2]
    }
}

/// True when some point of `points` is reachable under `k`
/// (`w(z, k) >= 1` for some z): the parameter is unsafe.
pub fn param_unsafe(frs: &FrsPolynomial, points: &[Point2], k: TrajectoryParam) -> bool {
    if points.is_empty() {
        return false;
    }
    let col = frs.collapse(k);
    points.iter().any(|&z| col.eval(z) >= 1.0)
}

/// Parameter projection of a point set: the unsafe region over a k-grid.
pub fn project_k(frs: &FrsPolynomial, points: &[Point2], n1: usize, n2: usize) -> KMask {
    let pb = &frs.param_box;
    let k1s = linspace(pb.k1_min, pb.k1_max, n1);
    let k2s = linspace(pb.k2_min, pb.k2_max, n2);
    let mask = exec::map_indexed(n1 * n2, |idx| {
        let k = TrajectoryParam { k1: k1s[idx / n2], k2: k2s[idx % n2] };
        param_unsafe(frs, points, k)
    });
    KMask { k1s, k2s, mask }
}

/// Spatial projection of one parameter: the `w = 1` contour over the domain
/// box (the region with `w >= 1` is the reachable slice).
pub fn project_x(frs: &FrsPolynomial, k: TrajectoryParam, cells: usize) -> Result<Vec<Vec<Point2>>> {
    if !frs.param_box.contains(k) {
        return Err(Error::invalid("project_x: k outside the parameter box"));
    }
    let col = frs.collapse(k);
    let (x_lo, x_hi) = frs.domain_box.x;
    let (y_lo, y_hi) = frs.domain_box.y;
    let ny = ((cells as f64) * (y_hi - y_lo) / (x_hi - x_lo)).ceil().max(8.0) as usize;
    let lines = marching_squares(
        |x, y| col.eval(pt(x, y)),
        (x_lo, x_hi),
        (y_lo, y_hi),
        cells,
        ny,
        1.0,
    );
    if lines.is_empty() {
        return Err(Error::Audit(format!(
            "project_x: empty contour for k = ({}, {})",
            k.k1, k.k2
        )));
    }
    Ok(lines)
}

/// Area of the `w >= 1` region at `k`, by rasterization. Used to compare
/// conservatism across fits.
pub fn superlevel_area(frs: &FrsPolynomial, k: TrajectoryParam, cells: usize) -> f64 {
    let col = frs.collapse(k);
    let (x_lo, x_hi) = frs.domain_box.x;
    let (y_lo, y_hi) = frs.domain_box.y;
    let ny = ((cells as f64) * (y_hi - y_lo) / (x_hi - x_lo)).ceil().max(8.0) as usize;
    let dx = (x_hi - x_lo) / cells as f64;
    let dy = (y_hi - y_lo) / ny as f64;
    let mut count = 0usize;
    for j in 0..ny {
        for i in 0..cells {
            let x = x_lo + dx * (i as f64 + 0.5);
            let y = y_lo + dy * (j as f64 + 0.5);
            if col.eval(pt(x, y)) >= 1.0 {
                count += 1;
            }
        }
    }
    count as f64 * dx * dy
}

/// Library of per-speed-range reachable sets tiling the operating band.
#[derive(Debug, Clone)]
pub struct FrsLibrary {
    pub entries: Vec<FrsPolynomial>,
}

impl FrsLibrary {
    pub fn new(mut entries: Vec<FrsPolynomial>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("frs library: no entries"));
        }
        entries.sort_by(|a, b| a.speed_range.0.partial_cmp(&b.speed_range.0).unwrap());
        for w in entries.windows(2) {
            if (w[0].speed_range.1 - w[1].speed_range.0).abs() > 1e-9 {
                return Err(Error::invalid("frs library: ranges must tile without gaps"));
            }
        }
        for e in &entries {
            e.validate()?;
        }
        Ok(FrsLibrary { entries })
    }

    /// Load every `frs_*.json` in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().map(|x| x == "json").unwrap_or(false)
                    && p.file_name()
                        .map(|n| n.to_string_lossy().starts_with("frs_"))
                        .unwrap_or(false)
            })
            .collect();
        paths.sort();
        for p in paths {
            entries.push(FrsPolynomial::load(&p)?);
        }
        Self::new(entries)
    }

    pub fn speed_band(&self) -> (f64, f64) {
        (
            self.entries.first().unwrap().speed_range.0,
            self.entries.last().unwrap().speed_range.1,
        )
    }

    /// Highest-range entry whose initial-condition band (speed range widened
    /// by the command-change limit) contains the current speed; lowest range
    /// as the fallback.
    pub fn select(&self, speed: f64, yaw_rate: f64) -> &FrsPolynomial {
        let fits = |e: &FrsPolynomial| {
            speed >= e.speed_range.0 - e.param_box.dk2_limit
                && speed <= e.speed_range.1 + e.param_box.dk2_limit
        };
        let chosen = self.entries.iter().rev().find(|e| fits(e)).unwrap_or_else(|| {
            if speed > self.speed_band().1 {
                log::warn!("speed {speed} above every range; clamping to the top entry");
                self.entries.last().unwrap()
            } else {
                &self.entries[0]
            }
        });
        if yaw_rate.abs() > chosen.param_box.k1_limit + 1e-9 {
            log::warn!(
                "yaw rate {yaw_rate} outside the fitted band {}",
                chosen.param_box.k1_limit
            );
        }
        chosen
    }
}

/// Braking-containment audit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assumption4Report {
    pub trials: usize,
    pub violations: usize,
    /// Most negative `w - 1` seen over violating footprint points.
    pub worst_deficit: f64,
}

/// Audit the braking assumption: random parameters and in-band initial
/// conditions, plant tracks the parameter then brakes at `tau_plan`; every
/// footprint vertex at every step must satisfy `w(z, k) >= 1`. Checks are
/// limited to `t <= check_horizon` when given (the full rollout otherwise).
pub fn audit_assumption4(
    ctx: &PipelineContext,
    frs: &FrsPolynomial,
    n_trials: usize,
    seed: u64,
    check_horizon: Option<f64>,
) -> Assumption4Report {
    let per = exec::map_indexed(n_trials, |i| {
        let mut rng = child_rng(seed, "a4-k", i as u64);
        let pb = &frs.param_box;
        let k = TrajectoryParam {
            k1: rng.gen_range(pb.k1_min..=pb.k1_max),
            k2: rng.gen_range(pb.k2_min..=pb.k2_max),
        };
        let pts = roll_plant_brake_points(ctx, k, derive_seed(seed, "a4", i as u64), i as u64, 1);
        let col = frs.collapse(k);
        let dt = ctx.cfg.sim.dt;
        let limit = check_horizon.unwrap_or(f64::INFINITY);
        let mut worst = 0.0f64;
        let mut violated = false;
        for (j, p) in pts.iter().enumerate() {
            // 4 corners per recorded step
            let t = (j / 4) as f64 * dt;
            if t > limit {
                break;
            }
            let w = col.eval(pt(p[0], p[1]));
            if w < 1.0 {
                violated = true;
                worst = worst.max(1.0 - w);
            }
        }
        (violated, worst)
    });
    Assumption4Report {
        trials: n_trials,
        violations: per.iter().filter(|r| r.0).count(),
        worst_deficit: per.iter().map(|r| r.1).fold(0.0f64, f64::max),
    }
}

/// Content-addressed file name for one range.
pub fn frs_file_name(range: (f64, f64), cfg_hash: &str, seed: u64) -> String {
    format!("frs_{:02.0}_{:02.0}_{cfg_hash}_s{seed}.json", range.0, range.1)
}

#[cfg(test)]
mod tests;
