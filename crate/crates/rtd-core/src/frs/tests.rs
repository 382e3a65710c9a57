use super::*;
use crate::config::Config;
use crate::errorfn::ErrorFunction;
use crate::offline;
use crate::vehicle::PredictionErrorBound;
use std::sync::OnceLock;

/// Scaled-down pipeline shared by the tests in this module.
fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.frs.ranges = vec![[9.0, 11.0]];
    cfg.frs.n_k1 = 5;
    cfg.frs.n_k2 = 3;
    cfg.frs.n_d = 4;
    cfg.frs.n_brake = 4;
    cfg.frs.fit_budget = 8_000;
    cfg.frs.n_holdout = 4_000;
    cfg.frs.holdout_threshold = 0.98;
    cfg.frs.r_inflate = 0.35;
    cfg.error_fn.n_k = 3;
    cfg.error_fn.n_ic = 3;
    cfg
}

fn fixture_ctx() -> &'static PipelineContext {
    static CTX: OnceLock<PipelineContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let eps = PredictionErrorBound { eps: [0.1, 0.1, 0.12, 0.15, 0.02, 0.4, 0.08, 0.05] };
        PipelineContext::with_eps(&small_config(), eps).unwrap()
    })
}

fn fixture() -> &'static (ErrorFunction, FrsPolynomial) {
    static FIX: OnceLock<(ErrorFunction, FrsPolynomial)> = OnceLock::new();
    FIX.get_or_init(|| {
        let ctx = fixture_ctx();
        let fit = offline::fit_error_for_range(ctx, (9.0, 11.0), 30, 1234).unwrap();
        let build = offline::build_frs_for_range(ctx, &fit.g, 3, 10, 1234).unwrap();
        (fit.g, build.frs)
    })
}

fn fixture_cloud() -> ReachSampleCloud {
    let ctx = fixture_ctx();
    let (g, frs) = fixture();
    let f = &ctx.cfg.frs;
    sample_reachable_cloud(
        ctx,
        g,
        &frs.param_box,
        frs.horizon,
        f.n_k1,
        f.n_k2,
        f.n_z0,
        f.n_d,
        f.n_brake,
        crate::rng::derive_seed(1234, "cloud", 90),
    )
    .unwrap()
}

#[test]
fn degenerate_cloud_is_the_straight_desired_trajectory() {
    let ctx = fixture_ctx();
    let g = ErrorFunction::zero((12.0, 12.0));
    let pbox = ParamBox {
        k1_min: 0.0,
        k1_max: 0.0,
        k2_min: 12.0,
        k2_max: 12.0,
        dk2_limit: 1.0,
        k1_limit: 0.25,
    };
    let cloud =
        sample_reachable_cloud(ctx, &g, &pbox, 2.0, 1, 1, 1, 1, 0, 7).unwrap();
    assert!(!cloud.points.is_empty());
    for p in &cloud.points {
        assert!(p[1].abs() < 1e-12, "off the straight line: {p:?}");
        assert!(p[0] >= -1e-12 && p[0] <= 12.0 * 2.0 + 1e-9);
        // on the desired trajectory x = k2 t for some sampled t
        let t = p[0] / 12.0;
        let steps = t / ctx.cfg.frs.dt;
        assert!((steps - steps.round()).abs() < 1e-6, "x={} not on a step", p[0]);
    }
}

#[test]
fn cloud_is_closed_under_mirror() {
    let cloud = fixture_cloud();
    let key = |p: &[f64; 4]| {
        (p[0].to_bits(), p[1].to_bits(), p[2].to_bits(), p[3].to_bits())
    };
    let set: std::collections::HashSet<_> = cloud.points.iter().map(key).collect();
    let neg = |v: f64| if v == 0.0 { 0.0 } else { -v };
    for p in &cloud.points {
        let m = [p[0], neg(p[1]), neg(p[2]), p[3]];
        assert!(set.contains(&key(&m)), "mirror of {p:?} missing");
    }
}

#[test]
fn cloud_x_extent_covers_top_speed_sweep() {
    let cloud = fixture_cloud();
    let (_, frs) = fixture();
    let v_hi = 11.0;
    let max_x = cloud
        .points
        .iter()
        .filter(|p| p[2] == 0.0 && p[3] == v_hi)
        .map(|p| p[0])
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(
        max_x >= v_hi * frs.horizon,
        "x extent {max_x} below v_hi * T = {}",
        v_hi * frs.horizon
    );
}

#[test]
fn fit_contains_every_cloud_point_exactly() {
    let (_, frs) = fixture();
    let cloud = fixture_cloud();
    let scale = frs.scale_box();
    let mut min_w = f64::INFINITY;
    for p in &cloud.points {
        let (u, _) = scale.scale(*p);
        min_w = min_w.min(eval_scaled(&frs.monomials, &frs.coefficients, u));
    }
    assert!(min_w >= 1.0, "fitting containment violated: min w = {min_w}");
    assert_eq!(frs.audit.fit_containment, 1.0);
    assert!(frs.audit.containment >= 0.98, "hold-out containment {}", frs.audit.containment);
}

#[test]
fn eval_matches_naive_and_flags_clamping() {
    let (_, frs) = fixture();
    let center = pt(
        0.5 * (frs.domain_box.x.0 + frs.domain_box.x.1),
        0.5 * (frs.domain_box.y.0 + frs.domain_box.y.1),
    );
    let k = TrajectoryParam { k1: 0.1, k2: 10.0 };
    let (w, clamped) = frs.eval_flagged(center, k);
    assert!(!clamped);
    let (u, _) = frs.scale_box().scale([center.x, center.y, k.k1, k.k2]);
    let naive = eval_scaled_naive(&frs.monomials, &frs.coefficients, u);
    assert!((w - naive).abs() <= 1e-12 * naive.abs().max(1.0));

    let (_, clamped_far) = frs.eval_flagged(pt(-100.0, 0.0), k);
    assert!(clamped_far);
}

#[test]
fn far_behind_the_vehicle_is_outside_the_level_set() {
    let (_, frs) = fixture();
    // clamping maps the far-behind query to the rear domain edge, which the
    // negative samples push below the level
    let w = frs.eval(pt(-100.0, 0.0), TrajectoryParam { k1: 0.0, k2: 10.0 });
    assert!(w < 1.0, "w behind the vehicle = {w}");
}

#[test]
fn on_trajectory_points_are_inside_the_level_set() {
    let ctx = fixture_ctx();
    let (_, frs) = fixture();
    let k = TrajectoryParam { k1: 0.0, k2: 10.0 };
    let des = crate::reference::DesiredTrajectory::new(k, &ctx.params, pt(0.0, 0.0));
    for i in 0..10 {
        let t = frs.horizon * i as f64 / 10.0;
        let z = des.point_at(t, pt(0.0, 0.0));
        assert!(frs.eval(z, k) >= 1.0, "w({z:?}) = {} at t={t}", frs.eval(z, k));
    }
}

#[test]
fn empty_point_set_projects_to_empty_unsafe_region() {
    let (_, frs) = fixture();
    let mask = project_k(frs, &[], 11, 11);
    assert!(mask.mask.iter().all(|&b| !b));
    assert!(!param_unsafe(frs, &[], TrajectoryParam { k1: 0.0, k2: 10.0 }));
}

#[test]
fn projection_masks_mirror_with_inputs() {
    let (_, frs) = fixture();
    let points = vec![pt(8.0, 1.5), pt(12.0, -0.5), pt(15.0, 3.0)];
    let mirrored: Vec<_> = points.iter().map(|p| pt(p.x, -p.y)).collect();
    let a = project_k(frs, &points, 9, 9);
    let b = project_k(frs, &mirrored, 9, 9);
    // flipping y of the inputs flips the unsafe mask in k1
    let n1 = a.k1s.len();
    let n2 = a.k2s.len();
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            assert_eq!(a.at(i1, i2), b.at(n1 - 1 - i1, i2), "mask mirror at ({i1},{i2})");
        }
    }
    // a point on the k0 trajectory marks k0 unsafe
    let k0 = TrajectoryParam { k1: 0.0, k2: 10.0 };
    let z = pt(10.0, 0.0);
    assert!(param_unsafe(frs, &[z], k0));
}

#[test]
fn projection_consistency_between_k_and_x() {
    use rand::Rng;
    let (_, frs) = fixture();
    let mut rng = crate::rng::child_rng(77, "proj", 0);
    for _ in 0..1000 {
        let z = pt(
            rng.gen_range(frs.domain_box.x.0..frs.domain_box.x.1),
            rng.gen_range(frs.domain_box.y.0..frs.domain_box.y.1),
        );
        let k = TrajectoryParam {
            k1: rng.gen_range(frs.param_box.k1_min..frs.param_box.k1_max),
            k2: rng.gen_range(frs.param_box.k2_min..frs.param_box.k2_max),
        };
        // both reduce to the same w >= 1 test
        let unsafe_k = param_unsafe(frs, &[z], k);
        let inside_x = frs.eval(z, k) >= 1.0;
        assert_eq!(unsafe_k, inside_x);
    }
}

#[test]
fn spatial_contour_exists_and_mirrors() {
    let (_, frs) = fixture();
    let k = TrajectoryParam { k1: 0.15, k2: 10.0 };
    let contour = project_x(frs, k, 80).unwrap();
    assert!(!contour.is_empty());
    let mk = TrajectoryParam { k1: -0.15, k2: 10.0 };
    let mirrored = project_x(frs, mk, 80).unwrap();
    // compare as point sets under y negation
    let flat: Vec<Point2> = contour.iter().flatten().copied().collect();
    let mflat: Vec<Point2> = mirrored.iter().flatten().copied().collect();
    assert_eq!(flat.len(), mflat.len());
    for p in flat.iter().take(200) {
        let target = pt(p.x, -p.y);
        let nearest = mflat.iter().map(|q| q.dist(target)).fold(f64::INFINITY, f64::min);
        assert!(nearest < 1e-9, "mirror contour missing {target:?} ({nearest})");
    }
    // the desired endpoint lies inside the slice
    let ctx = fixture_ctx();
    let des = crate::reference::DesiredTrajectory::new(k, &ctx.params, pt(0.0, 0.0));
    let end = des.point_at(frs.horizon, pt(0.0, 0.0));
    assert!(frs.eval(end, k) >= 1.0);
}

#[test]
fn error_scaling_grows_the_reachable_slice() {
    let ctx = fixture_ctx();
    let (g, frs) = fixture();
    // refit with an inflated error function against a relaxed threshold
    let mut cfg = ctx.cfg.clone();
    cfg.frs.holdout_threshold = 0.5;
    let relaxed = PipelineContext::with_eps(&cfg, ctx.eps).unwrap();
    let big =
        offline::build_frs_for_range(&relaxed, &g.scaled(1.5), 3, 0, 4321).unwrap().frs;
    let k = TrajectoryParam { k1: 0.1, k2: 10.0 };
    let a_small = superlevel_area(frs, k, 100);
    let a_big = superlevel_area(&big, k, 100);
    assert!(
        a_big >= 0.99 * a_small,
        "area should not shrink: {a_small} -> {a_big}"
    );
}

#[test]
fn select_prefers_highest_fitting_range() {
    let entries: Vec<FrsPolynomial> = [(3.0, 5.0), (5.0, 7.0), (7.0, 9.0), (9.0, 11.0), (11.0, 13.0), (13.0, 15.0)]
        .iter()
        .map(|&(lo, hi)| dummy_frs((lo, hi)))
        .collect();
    let lib = FrsLibrary::new(entries).unwrap();
    assert_eq!(lib.select(11.1, 0.027).speed_range, (11.0, 13.0));
    assert_eq!(lib.select(2.0, 0.0).speed_range, (3.0, 5.0));
    assert_eq!(lib.select(15.9, 0.0).speed_range, (13.0, 15.0));
    assert_eq!(lib.select(30.0, 0.0).speed_range, (13.0, 15.0));
}

fn dummy_frs(range: (f64, f64)) -> FrsPolynomial {
    FrsPolynomial {
        alpha: 1,
        horizon: 3.0,
        speed_range: range,
        param_box: ParamBox::for_speed_range(range.0, range.1, 1.0, 0.25),
        monomials: vec![[0, 0, 0, 0]],
        coefficients: vec![2.0],
        g: ErrorFunction::zero(range),
        domain_box: DomainBox { x: (-5.0, 50.0), y: (-20.0, 20.0) },
        audit: FrsAudit {
            seed: 0,
            n_holdout: 0,
            containment: 1.0,
            fit_containment: 1.0,
            d_stop: 20.0,
            tau_plan: 0.5,
            assumption4_trials: 0,
            assumption4_violations: 0,
            external: false,
        },
    }
}

#[test]
fn library_rejects_gapped_ranges() {
    let entries = vec![dummy_frs((3.0, 5.0)), dummy_frs((7.0, 9.0))];
    assert!(FrsLibrary::new(entries).is_err());
}

#[test]
fn horizon_shorter_than_braking_need_is_rejected() {
    let mut bad = dummy_frs((9.0, 11.0));
    bad.horizon = 1.0;
    bad.audit.d_stop = 15.0; // needs 0.5 + 15/11 = 1.86
    assert!(bad.validate().is_err());
}

#[test]
fn braking_audit_passes_and_detects_shrunk_w() {
    let ctx = fixture_ctx();
    let (_, frs) = fixture();
    let report = audit_assumption4(ctx, frs, 10, 2024, None);
    assert_eq!(report.violations, 0, "worst deficit {}", report.worst_deficit);

    // tracking-only horizon is a subset of the full check
    let tracking_only = audit_assumption4(ctx, frs, 10, 2024, Some(ctx.cfg.planner.tau_plan));
    assert_eq!(tracking_only.violations, 0);

    // negative control: a uniformly shrunk w must fail
    let mut shrunk = frs.clone();
    let const_idx = shrunk.monomials.iter().position(|e| *e == [0, 0, 0, 0]).unwrap();
    shrunk.coefficients[const_idx] -= 0.5;
    let bad = audit_assumption4(ctx, &shrunk, 10, 2024, None);
    assert!(bad.violations >= 1, "shrunk w not detected");
}

#[test]
fn file_round_trip_is_bit_exact_and_external_import_loads() {
    let (_, frs) = fixture();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(frs_file_name(frs.speed_range, "deadbeef0123", 1));
    frs.save(&path).unwrap();
    let back = FrsPolynomial::load(&path).unwrap();
    assert_eq!(*frs, back);
    for (a, b) in frs.coefficients.iter().zip(&back.coefficients) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    // external import: audit fields marked, still validated structurally
    let mut ext = frs.clone();
    ext.audit.external = true;
    ext.audit.containment = 0.0;
    let path2 = dir.path().join("frs_external.json");
    ext.save(&path2).unwrap();
    let loaded = FrsPolynomial::load(&path2).unwrap();
    assert!(loaded.audit.external);
}

#[test]
fn library_directory_round_trip() {
    let (_, frs) = fixture();
    let dir = tempfile::tempdir().unwrap();
    offline::save_library(
        &FrsLibrary { entries: vec![frs.clone()] },
        dir.path(),
        "cafe01234567",
        9,
    )
    .unwrap();
    let lib = FrsLibrary::load_dir(dir.path()).unwrap();
    assert_eq!(lib.entries.len(), 1);
    assert_eq!(lib.entries[0], *frs);
}
