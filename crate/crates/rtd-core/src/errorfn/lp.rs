//! Dense LP solver for the envelope fit:
//!
//! minimize `c . a` over free `a` in R^3 subject to `A a >= b`.
//!
//! Solved through the dual `max b . y s.t. A^T y = c, y >= 0` with a
//! two-phase primal simplex. The basis has size 3 regardless of the
//! constraint count, so thousands of sample constraints stay cheap.

use crate::{Error, Result};
use nalgebra::{Matrix3, Vector3};

const TOL: f64 = 1e-9;

struct Tableau<'a> {
    /// Columns of the dual constraint matrix (rows of A, sign-adjusted).
    cols: &'a [Vector3<f64>],
    rhs: Vector3<f64>,
}

impl Tableau<'_> {
    fn col(&self, j: usize) -> Vector3<f64> {
        if j < self.cols.len() {
            self.cols[j]
        } else {
            // artificial identity column
            let mut e = Vector3::zeros();
            e[j - self.cols.len()] = 1.0;
            e
        }
    }
}

fn basis_matrix(t: &Tableau, basis: &[usize; 3]) -> Matrix3<f64> {
    Matrix3::from_columns(&[t.col(basis[0]), t.col(basis[1]), t.col(basis[2])])
}

/// One simplex phase: maximize `obj` over the current basis. Returns the
/// final multipliers.
fn run_phase(
    t: &Tableau,
    basis: &mut [usize; 3],
    obj: &dyn Fn(usize) -> f64,
    allow: &dyn Fn(usize) -> bool,
    max_iter: usize,
) -> Result<Vector3<f64>> {
    let n_cols = t.cols.len() + 3;
    for iter in 0..max_iter {
        let bland = iter > max_iter / 2;
        let b_mat = basis_matrix(t, basis);
        let lu = b_mat.lu();
        let y_b = lu
            .solve(&t.rhs)
            .ok_or_else(|| Error::invalid("lp: singular basis"))?;
        let obj_b = Vector3::new(obj(basis[0]), obj(basis[1]), obj(basis[2]));
        let pi = b_mat
            .transpose()
            .lu()
            .solve(&obj_b)
            .ok_or_else(|| Error::invalid("lp: singular basis transpose"))?;

        // pricing
        let mut entering = None;
        let mut best = TOL;
        for j in 0..n_cols {
            if basis.contains(&j) || !allow(j) {
                continue;
            }
            let r = obj(j) - pi.dot(&t.col(j));
            if r > best {
                entering = Some(j);
                best = r;
                if bland {
                    break;
                }
            }
        }
        let Some(e) = entering else {
            return Ok(pi);
        };

        let d = lu
            .solve(&t.col(e))
            .ok_or_else(|| Error::invalid("lp: singular basis in ratio test"))?;
        let mut leave = None;
        let mut theta = f64::INFINITY;
        for i in 0..3 {
            if d[i] > TOL {
                let ratio = y_b[i].max(0.0) / d[i];
                if ratio < theta - TOL || (ratio < theta + TOL && leave.is_none()) {
                    theta = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else {
            return Err(Error::invalid("lp: dual unbounded (primal infeasible)"));
        };
        basis[l] = e;
    }
    Err(Error::invalid("lp: iteration limit"))
}

/// Minimize `c . a` subject to `rows[j] . a >= rhs[j]` for all j.
pub fn solve_min_geq(c: [f64; 3], rows: &[[f64; 3]], rhs: &[f64]) -> Result<[f64; 3]> {
    assert_eq!(rows.len(), rhs.len());
    let m = rows.len();
    if m == 0 {
        return Err(Error::invalid("lp: no constraints"));
    }

    // sign-adjust so the dual rhs is nonnegative for the artificial start
    let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let signs = [sign(c[0]), sign(c[1]), sign(c[2])];
    let cols: Vec<Vector3<f64>> = rows
        .iter()
        .map(|r| Vector3::new(signs[0] * r[0], signs[1] * r[1], signs[2] * r[2]))
        .collect();
    let rhs_dual = Vector3::new(signs[0] * c[0], signs[1] * c[1], signs[2] * c[2]);
    let t = Tableau { cols: &cols, rhs: rhs_dual };

    // Phase 1: drive artificials (columns m..m+3) to zero
    let mut basis = [m, m + 1, m + 2];
    let phase1 = |j: usize| if j >= m { -1.0 } else { 0.0 };
    let iters = 50 * (m + 3) + 200;
    run_phase(&t, &mut basis, &phase1, &|_| true, iters)?;
    let b_mat = basis_matrix(&t, &basis);
    let y_b = b_mat
        .lu()
        .solve(&t.rhs)
        .ok_or_else(|| Error::invalid("lp: singular phase-1 basis"))?;
    let art_mass: f64 =
        (0..3).filter(|&i| basis[i] >= m).map(|i| y_b[i].abs()).sum();
    if art_mass > 1e-7 {
        return Err(Error::invalid("lp: dual infeasible (primal unbounded)"));
    }

    // Phase 2: maximize b . y over real columns; artificials stay barred
    // (a zero-level artificial may linger in a degenerate basis).
    let phase2 = |j: usize| if j < m { rhs[j] } else { -1e30 };
    let pi = run_phase(&t, &mut basis, &phase2, &|j| j < m, iters)?;

    let a = [signs[0] * pi[0], signs[1] * pi[1], signs[2] * pi[2]];
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("lp: non-finite solution"));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_sample_envelope() {
        // minimize integral over [0,1] of a0 + a1 t + a2 t^2 subject to
        // passing above (0,0) and (1,0.1), nonneg on a grid
        let mut rows = vec![[1.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let mut rhs = vec![0.0, 0.1];
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            rows.push([1.0, t, t * t]);
            rhs.push(0.0);
        }
        let a = solve_min_geq([1.0, 0.5, 1.0 / 3.0], &rows, &rhs).unwrap();
        // optimum loads the cheapest coefficient: a ~= (0, 0, 0.1)
        let integral = a[0] + a[1] / 2.0 + a[2] / 3.0;
        assert!(integral <= 0.1 / 3.0 + 1e-6, "integral {integral}");
        for (row, b) in rows.iter().zip(&rhs) {
            let v = row[0] * a[0] + row[1] * a[1] + row[2] * a[2];
            assert!(v >= b - 1e-7, "constraint violated: {v} < {b}");
        }
    }

    #[test]
    fn matches_coarse_grid_search() {
        let samples = [(0.0f64, 0.0f64), (1.0, 0.1)];
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (t, r) in samples {
            rows.push([1.0, t, t * t]);
            rhs.push(r);
        }
        for i in 0..=50 {
            let t = i as f64 / 50.0;
            rows.push([1.0, t, t * t]);
            rhs.push(0.0);
        }
        let c = [1.0, 0.5, 1.0 / 3.0];
        let a = solve_min_geq(c, &rows, &rhs).unwrap();
        let lp_obj = c[0] * a[0] + c[1] * a[1] + c[2] * a[2];

        // brute force over quantized coefficients
        let mut best = f64::INFINITY;
        let grid: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.01).collect();
        for &a0 in &grid {
            for &a1 in &grid {
                for &a2 in &grid {
                    let feasible = rows
                        .iter()
                        .zip(&rhs)
                        .all(|(row, b)| row[0] * a0 + row[1] * a1 + row[2] * a2 >= *b);
                    if feasible {
                        best = best.min(c[0] * a0 + c[1] * a1 + c[2] * a2);
                    }
                }
            }
        }
        assert!(lp_obj <= best + 1e-9, "lp {lp_obj} vs grid {best}");
        assert_relative_eq!(lp_obj, best, epsilon = 0.02);
    }

    #[test]
    fn random_instances_feasible_and_not_worse_than_sampling() {
        use rand::Rng;
        let mut rng = crate::rng::child_rng(3, "lp", 0);
        for _ in 0..50 {
            let n = rng.gen_range(5..200);
            let mut rows = Vec::new();
            let mut rhs = Vec::new();
            for _ in 0..n {
                let t: f64 = rng.gen_range(0.0..2.0);
                rows.push([1.0, t, t * t]);
                rhs.push(rng.gen_range(0.0..1.0));
            }
            for i in 0..=40 {
                let t = i as f64 * 0.05;
                rows.push([1.0, t, t * t]);
                rhs.push(0.0);
            }
            let a = solve_min_geq([2.0, 2.0, 8.0 / 3.0], &rows, &rhs).unwrap();
            for (row, b) in rows.iter().zip(&rhs) {
                let v = row[0] * a[0] + row[1] * a[1] + row[2] * a[2];
                assert!(v >= b - 1e-7);
            }
        }
    }
}
