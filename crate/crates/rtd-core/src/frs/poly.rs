//! Polynomial plumbing for the reachable-set representation: monomial bases
//! over scaled `(x, y, k1, k2)`, fast evaluation through power tables, and
//! collapse to a two-variable polynomial for a fixed parameter.

use crate::geom::Point2;
use serde::{Deserialize, Serialize};

/// Exponent tuples over `(x, y, k1, k2)`.
pub type Exponents = [u8; 4];

/// All exponent tuples with total degree at most `2 * alpha`.
pub fn full_basis(alpha: u32) -> Vec<Exponents> {
    let d = (2 * alpha) as u8;
    let mut out = Vec::new();
    for a in 0..=d {
        for b in 0..=(d - a) {
            for c in 0..=(d - a - b) {
                for e in 0..=(d - a - b - c) {
                    out.push([a, b, c, e]);
                }
            }
        }
    }
    out
}

/// Basis restricted to terms even in `(y, k1)` jointly, so any polynomial on
/// it satisfies `w(x, y, k1, k2) = w(x, -y, -k1, k2)` identically.
pub fn symmetric_basis(alpha: u32) -> Vec<Exponents> {
    full_basis(alpha).into_iter().filter(|e| (e[1] + e[2]) % 2 == 0).collect()
}

/// Affine map of the physical domain onto `[-1, 1]^4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

impl ScaleBox {
    pub fn new(x: (f64, f64), y: (f64, f64), k1: (f64, f64), k2: (f64, f64)) -> Self {
        ScaleBox { lo: [x.0, y.0, k1.0, k2.0], hi: [x.1, y.1, k1.1, k2.1] }
    }

    /// Scale a raw sample into the unit box; the flag reports clamping.
    pub fn scale(&self, raw: [f64; 4]) -> ([f64; 4], bool) {
        let mut out = [0.0; 4];
        let mut clamped = false;
        for i in 0..4 {
            let span = self.hi[i] - self.lo[i];
            let u = if span.abs() < 1e-12 {
                0.0
            } else {
                2.0 * (raw[i] - self.lo[i]) / span - 1.0
            };
            if !(-1.0..=1.0).contains(&u) {
                clamped = true;
            }
            out[i] = u.clamp(-1.0, 1.0);
        }
        (out, clamped)
    }

    /// The mirror symmetry needs y and k1 ranges centered on zero.
    pub fn is_mirror_symmetric(&self) -> bool {
        (self.lo[1] + self.hi[1]).abs() < 1e-9 && (self.lo[2] + self.hi[2]).abs() < 1e-9
    }
}

/// Fill `powers[v][e] = u[v]^e` up to `max_deg`.
#[inline]
fn power_table(u: [f64; 4], max_deg: usize) -> [Vec<f64>; 4] {
    std::array::from_fn(|v| {
        let mut p = Vec::with_capacity(max_deg + 1);
        p.push(1.0);
        for e in 1..=max_deg {
            p.push(p[e - 1] * u[v]);
        }
        p
    })
}

/// Evaluate a monomial expansion at a scaled point. Cost is linear in the
/// number of monomials.
pub fn eval_scaled(exps: &[Exponents], coeffs: &[f64], u: [f64; 4]) -> f64 {
    debug_assert_eq!(exps.len(), coeffs.len());
    let max_deg = exps.iter().map(|e| e.iter().map(|&v| v as usize).max().unwrap()).max().unwrap_or(0);
    let p = power_table(u, max_deg);
    exps.iter()
        .zip(coeffs)
        .map(|(e, c)| c * p[0][e[0] as usize] * p[1][e[1] as usize] * p[2][e[2] as usize] * p[3][e[3] as usize])
        .sum()
}

/// Same value computed the slow way (`powi` per term); kept as an
/// independent evaluation route for tests.
pub fn eval_scaled_naive(exps: &[Exponents], coeffs: &[f64], u: [f64; 4]) -> f64 {
    exps.iter()
        .zip(coeffs)
        .map(|(e, c)| {
            c * u[0].powi(e[0] as i32)
                * u[1].powi(e[1] as i32)
                * u[2].powi(e[2] as i32)
                * u[3].powi(e[3] as i32)
        })
        .sum()
}

/// Two-variable polynomial over scaled `(x, y)`, produced by fixing `k`.
#[derive(Debug, Clone)]
pub struct CollapsedPoly {
    /// (x exponent, y exponent, coefficient)
    pub terms: Vec<(u8, u8, f64)>,
    pub scale: ScaleBox,
}

impl CollapsedPoly {
    /// Evaluate at a physical point (clamped into the box).
    pub fn eval(&self, z: Point2) -> f64 {
        let (u, _) = self.scale.scale([z.x, z.y, 0.0, 0.0]);
        self.eval_scaled(u[0], u[1])
    }

    pub fn eval_scaled(&self, ux: f64, uy: f64) -> f64 {
        let max_deg =
            self.terms.iter().map(|t| t.0.max(t.1) as usize).max().unwrap_or(0);
        let mut px = Vec::with_capacity(max_deg + 1);
        let mut py = Vec::with_capacity(max_deg + 1);
        px.push(1.0);
        py.push(1.0);
        for e in 1..=max_deg {
            px.push(px[e - 1] * ux);
            py.push(py[e - 1] * uy);
        }
        self.terms.iter().map(|&(a, b, c)| c * px[a as usize] * py[b as usize]).sum()
    }
}

/// Fix the parameter coordinates, folding them into per-`(x, y)` terms.
pub fn collapse_k(
    exps: &[Exponents],
    coeffs: &[f64],
    scale: &ScaleBox,
    k1: f64,
    k2: f64,
) -> CollapsedPoly {
    let (u, _) = scale.scale([0.0, 0.0, k1, k2]);
    let max_deg = exps.iter().map(|e| e[2].max(e[3]) as usize).max().unwrap_or(0);
    let mut p2 = Vec::with_capacity(max_deg + 1);
    let mut p3 = Vec::with_capacity(max_deg + 1);
    p2.push(1.0);
    p3.push(1.0);
    for e in 1..=max_deg {
        p2.push(p2[e - 1] * u[2]);
        p3.push(p3[e - 1] * u[3]);
    }
    let mut acc: std::collections::BTreeMap<(u8, u8), f64> = std::collections::BTreeMap::new();
    for (e, c) in exps.iter().zip(coeffs) {
        *acc.entry((e[0], e[1])).or_insert(0.0) += c * p2[e[2] as usize] * p3[e[3] as usize];
    }
    CollapsedPoly {
        terms: acc.into_iter().map(|((a, b), c)| (a, b, c)).collect(),
        scale: *scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn binom(n: u64, k: u64) -> u64 {
        let mut r = 1u64;
        for i in 0..k {
            r = r * (n - i) / (i + 1);
        }
        r
    }

    #[test]
    fn full_basis_count_is_binomial() {
        // C(4 + 2*alpha, 4) monomials in 4 variables up to degree 2*alpha
        for alpha in 1..=4 {
            let n = full_basis(alpha).len() as u64;
            assert_eq!(n, binom(4 + 2 * alpha as u64, 4), "alpha {alpha}");
        }
        assert_eq!(full_basis(3).len(), 210);
    }

    #[test]
    fn symmetric_basis_enforces_mirror() {
        use rand::Rng;
        let exps = symmetric_basis(3);
        let mut rng = crate::rng::child_rng(1, "sym", 0);
        let coeffs: Vec<f64> = (0..exps.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..200 {
            let u = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let w = eval_scaled(&exps, &coeffs, u);
            let wm = eval_scaled(&exps, &coeffs, [u[0], -u[1], -u[2], u[3]]);
            assert_eq!(w, wm, "mirror symmetry must be exact");
        }
    }

    #[test]
    fn fast_eval_matches_naive_route() {
        use rand::Rng;
        let exps = symmetric_basis(3);
        let mut rng = crate::rng::child_rng(2, "eval", 0);
        let coeffs: Vec<f64> = (0..exps.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..100 {
            let u = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let a = eval_scaled(&exps, &coeffs, u);
            let b = eval_scaled_naive(&exps, &coeffs, u);
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn collapse_agrees_with_direct_eval() {
        use rand::Rng;
        let exps = symmetric_basis(3);
        let scale = ScaleBox::new((-5.0, 40.0), (-15.0, 15.0), (-0.25, 0.25), (9.0, 11.0));
        let mut rng = crate::rng::child_rng(3, "collapse", 0);
        let coeffs: Vec<f64> = (0..exps.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..50 {
            let k1 = rng.gen_range(-0.25..0.25);
            let k2 = rng.gen_range(9.0..11.0);
            let col = collapse_k(&exps, &coeffs, &scale, k1, k2);
            let z = crate::geom::pt(rng.gen_range(-5.0..40.0), rng.gen_range(-15.0..15.0));
            let (u, _) = scale.scale([z.x, z.y, k1, k2]);
            let direct = eval_scaled(&exps, &coeffs, u);
            assert_relative_eq!(col.eval(z), direct, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn scaling_clamps_and_flags() {
        let scale = ScaleBox::new((0.0, 10.0), (-5.0, 5.0), (-0.25, 0.25), (3.0, 5.0));
        let (u, clamped) = scale.scale([5.0, 0.0, 0.0, 4.0]);
        assert!(!clamped);
        assert_relative_eq!(u[0], 0.0);
        let (u2, clamped2) = scale.scale([100.0, 0.0, 0.0, 4.0]);
        assert!(clamped2);
        assert_eq!(u2[0], 1.0);
        assert!(scale.is_mirror_symmetric());
    }
}
