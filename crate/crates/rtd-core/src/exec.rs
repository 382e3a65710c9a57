//! Batch execution: data-parallel with `rayon` (feature `parallel`, default)
//! or sequential.
//!
//! Results are always collected in input order, so parallel and sequential
//! runs are bit-identical. [`force_sequential`] switches the current thread
//! to the sequential path at runtime, which the benchmark suite uses to
//! compare both paths in a single build.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQ: Cell<bool> = const { Cell::new(false) };
}

/// Run `f` with all `exec` batch helpers on this thread forced sequential.
pub fn force_sequential<R>(f: impl FnOnce() -> R) -> R {
    FORCE_SEQ.with(|c| c.set(true));
    let out = f();
    FORCE_SEQ.with(|c| c.set(false));
    out
}

fn sequential_forced() -> bool {
    FORCE_SEQ.with(|c| c.get())
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential_forced() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Map `f` over a slice, collecting results in input order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !sequential_forced() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_forced_sequential_agree() {
        let par: Vec<f64> = map_indexed(257, |i| (i as f64).sqrt().sin());
        let seq: Vec<f64> = force_sequential(|| map_indexed(257, |i| (i as f64).sqrt().sin()));
        assert_eq!(par, seq);
    }

    #[test]
    fn order_is_input_order() {
        let out = map_indexed(1000, |i| i);
        assert!(out.iter().enumerate().all(|(i, &v)| i == v));
    }
}
