//! Offline pipeline: per speed range, measure the stopping distance, derive
//! the horizon, collect tracking-error samples, fit and validate `g`, sample
//! the reachable cloud, fit and audit `w`.

use crate::errorfn::{
    collect_error_samples, fit_error_function, validate_lemma1, CoverageReport, ErrorFunction,
    ErrorSampleSet,
};
use crate::frs::{
    audit_assumption4, fit_w, frs_file_name, sample_reachable_cloud, Assumption4Report,
    FrsLibrary, FrsPolynomial,
};
use crate::pipeline::PipelineContext;
use crate::planner::compute_horizon;
use crate::reference::ParamBox;
use crate::rng::derive_seed;
use crate::vehicle::measure_stopping_distance;
use crate::{Error, Result};
use std::path::Path;

/// Stopping distance of the nominal plant from the range's top speed.
pub fn range_stopping_distance(ctx: &PipelineContext, v_hi: f64) -> f64 {
    measure_stopping_distance(
        v_hi,
        &ctx.params,
        &ctx.act,
        &ctx.controller,
        ctx.cfg.trajectory.a_max_brake,
        ctx.cfg.sim.dt,
        ctx.cfg.sim.stop_speed,
    )
}

/// Error-function fit plus its hold-out validation for one range.
pub struct ErrorFit {
    pub g: ErrorFunction,
    pub samples: ErrorSampleSet,
    pub coverage: CoverageReport,
    pub d_stop: f64,
    pub horizon: f64,
}

pub fn fit_error_for_range(
    ctx: &PipelineContext,
    range: (f64, f64),
    n_validation: usize,
    seed: u64,
) -> Result<ErrorFit> {
    let d_stop = range_stopping_distance(ctx, range.1);
    let horizon = compute_horizon(ctx.cfg.planner.tau_plan, d_stop, range.1);
    let ecfg = &ctx.cfg.error_fn;
    let samples = collect_error_samples(
        ctx,
        range,
        horizon,
        ecfg.n_k,
        ecfg.n_ic,
        derive_seed(seed, "collect", (range.0 * 10.0) as u64),
    )?;
    let mut g = fit_error_function(&samples, ecfg.margin_frac, ecfg.floor, ecfg.grid_points)?;
    g.provenance.n_k = ecfg.n_k;
    g.provenance.n_ic = ecfg.n_ic;
    let coverage = validate_lemma1(
        ctx,
        &g,
        n_validation,
        derive_seed(seed, "lemma1", (range.0 * 10.0) as u64),
    );
    Ok(ErrorFit { g, samples, coverage, d_stop, horizon })
}

/// Reachable-set build for one range: cloud, fit, braking audit.
pub struct RangeBuild {
    pub frs: FrsPolynomial,
    pub assumption4: Assumption4Report,
}

pub fn build_frs_for_range(
    ctx: &PipelineContext,
    g: &ErrorFunction,
    alpha: u32,
    n_a4_trials: usize,
    seed: u64,
) -> Result<RangeBuild> {
    let range = g.speed_range;
    let d_stop = range_stopping_distance(ctx, range.1);
    let horizon = compute_horizon(ctx.cfg.planner.tau_plan, d_stop, range.1);
    if !g.defined_at(horizon) {
        return Err(Error::Audit(format!(
            "error function horizon {} does not reach the required {horizon}",
            g.horizon
        )));
    }
    let pbox = ParamBox::for_speed_range(
        range.0,
        range.1,
        ctx.cfg.planner.dk2_limit,
        ctx.cfg.planner.k1_limit,
    );
    let fcfg = &ctx.cfg.frs;
    let cloud = sample_reachable_cloud(
        ctx,
        g,
        &pbox,
        horizon,
        fcfg.n_k1,
        fcfg.n_k2,
        fcfg.n_z0,
        fcfg.n_d,
        fcfg.n_brake,
        derive_seed(seed, "cloud", (range.0 * 10.0) as u64),
    )?;
    let mut frs = fit_w(
        ctx,
        &cloud,
        g,
        &pbox,
        alpha,
        d_stop,
        derive_seed(seed, "fit-w", (range.0 * 10.0) as u64),
    )?;
    let assumption4 = audit_assumption4(
        ctx,
        &frs,
        n_a4_trials,
        derive_seed(seed, "a4", (range.0 * 10.0) as u64),
        None,
    );
    frs.audit.assumption4_trials = assumption4.trials;
    frs.audit.assumption4_violations = assumption4.violations;
    Ok(RangeBuild { frs, assumption4 })
}

/// Build the full library (every configured range) in memory.
pub fn build_library(
    ctx: &PipelineContext,
    n_a4_trials: usize,
    seed: u64,
) -> Result<(FrsLibrary, Vec<CoverageReport>, Vec<Assumption4Report>)> {
    let mut entries = Vec::new();
    let mut coverages = Vec::new();
    let mut audits = Vec::new();
    for r in &ctx.cfg.frs.ranges {
        let range = (r[0], r[1]);
        let fit = fit_error_for_range(ctx, range, 200, seed)?;
        let build = build_frs_for_range(ctx, &fit.g, ctx.cfg.frs.alpha, n_a4_trials, seed)?;
        entries.push(build.frs);
        coverages.push(fit.coverage);
        audits.push(build.assumption4);
    }
    Ok((FrsLibrary::new(entries)?, coverages, audits))
}

/// Write a library to a directory with content-addressed names.
pub fn save_library(library: &FrsLibrary, dir: &Path, cfg_hash: &str, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for e in &library.entries {
        e.save(&dir.join(frs_file_name(e.speed_range, cfg_hash, seed)))?;
    }
    Ok(())
}
