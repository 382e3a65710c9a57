//! Marching squares: extract the `f = level` contour of a scalar field over
//! a rectangular grid, chained into polylines.

use crate::geom::{pt, Point2};
use std::collections::HashMap;

/// Extract level-set segments and chain them. `f` is sampled at
/// `(nx+1) x (ny+1)` grid nodes spanning the ranges.
pub fn marching_squares<F>(
    f: F,
    x_range: (f64, f64),
    y_range: (f64, f64),
    nx: usize,
    ny: usize,
    level: f64,
) -> Vec<Vec<Point2>>
where
    F: Fn(f64, f64) -> f64,
{
    let dx = (x_range.1 - x_range.0) / nx as f64;
    let dy = (y_range.1 - y_range.0) / ny as f64;
    let xs: Vec<f64> = (0..=nx).map(|i| x_range.0 + dx * i as f64).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| y_range.0 + dy * j as f64).collect();
    let mut values = vec![0.0f64; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            values[j * (nx + 1) + i] = f(xs[i], ys[j]) - level;
        }
    }
    let v = |i: usize, j: usize| values[j * (nx + 1) + i];

    let mut segments: Vec<(Point2, Point2)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let corners = [v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)];
            let mut case = 0usize;
            for (bit, &c) in corners.iter().enumerate() {
                if c > 0.0 {
                    case |= 1 << bit;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            // interpolated crossing on each cell edge: 0 bottom, 1 right,
            // 2 top, 3 left
            let lerp = |a: f64, b: f64| if (b - a).abs() < 1e-300 { 0.5 } else { -a / (b - a) };
            let edge_point = |e: usize| -> Point2 {
                match e {
                    0 => pt(xs[i] + dx * lerp(corners[0], corners[1]), ys[j]),
                    1 => pt(xs[i + 1], ys[j] + dy * lerp(corners[1], corners[2])),
                    2 => pt(xs[i] + dx * lerp(corners[3], corners[2]), ys[j + 1]),
                    _ => pt(xs[i], ys[j] + dy * lerp(corners[0], corners[3])),
                }
            };
            let mut emit = |a: usize, b: usize| segments.push((edge_point(a), edge_point(b)));
            match case {
                1 => emit(3, 0),
                2 => emit(0, 1),
                3 => emit(3, 1),
                4 => emit(1, 2),
                5 => {
                    // saddle: disambiguate with the cell center
                    let center = f(xs[i] + 0.5 * dx, ys[j] + 0.5 * dy) - level;
                    if center > 0.0 {
                        emit(3, 2);
                        emit(0, 1);
                    } else {
                        emit(3, 0);
                        emit(1, 2);
                    }
                }
                6 => emit(0, 2),
                7 => emit(3, 2),
                8 => emit(2, 3),
                9 => emit(0, 2),
                10 => {
                    let center = f(xs[i] + 0.5 * dx, ys[j] + 0.5 * dy) - level;
                    if center > 0.0 {
                        emit(0, 3);
                        emit(1, 2);
                    } else {
                        emit(0, 1);
                        emit(2, 3);
                    }
                }
                11 => emit(1, 2),
                12 => emit(1, 3),
                13 => emit(0, 1),
                14 => emit(3, 0),
                _ => unreachable!(),
            }
        }
    }
    chain_segments(segments, dx.min(dy) * 1e-6)
}

/// Greedily join segments that share endpoints into polylines.
fn chain_segments(segments: Vec<(Point2, Point2)>, tol: f64) -> Vec<Vec<Point2>> {
    let key = |p: Point2| ((p.x / tol).round() as i64, (p.y / tol).round() as i64);
    let mut by_end: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (a, b)) in segments.iter().enumerate() {
        by_end.entry(key(*a)).or_default().push(idx);
        by_end.entry(key(*b)).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut out = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut line = vec![a, b];
        // extend forward from the tail, then backward from the head
        for _pass in 0..2 {
            loop {
                let tail = *line.last().unwrap();
                let Some(cands) = by_end.get(&key(tail)) else { break };
                let mut extended = false;
                for &idx in cands {
                    if used[idx] {
                        continue;
                    }
                    let (p, q) = segments[idx];
                    let next = if p.dist(tail) <= tol * 4.0 {
                        q
                    } else if q.dist(tail) <= tol * 4.0 {
                        p
                    } else {
                        continue;
                    };
                    used[idx] = true;
                    line.push(next);
                    extended = true;
                    break;
                }
                if !extended {
                    break;
                }
            }
            line.reverse();
        }
        out.push(line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_contour_radius() {
        let f = |x: f64, y: f64| -(x * x + y * y);
        let lines = marching_squares(f, (-2.0, 2.0), (-2.0, 2.0), 200, 200, -1.0);
        assert!(!lines.is_empty());
        let total: usize = lines.iter().map(|l| l.len()).sum();
        assert!(total > 100);
        for line in &lines {
            for p in line {
                assert!((p.norm() - 1.0).abs() < 0.02, "contour point off circle: {p:?}");
            }
        }
        // chained into one closed loop
        assert_eq!(lines.len(), 1);
        let line = &lines[0];
        assert!(line[0].dist(*line.last().unwrap()) < 0.05);
    }

    #[test]
    fn empty_contour_for_constant_field() {
        let lines = marching_squares(|_, _| 0.0, (0.0, 1.0), (0.0, 1.0), 10, 10, 1.0);
        assert!(lines.is_empty());
    }
}
