//! Data-parallel loop helpers.
//!
//! With the `parallel` feature the helpers dispatch to rayon once the work is
//! large enough; otherwise they run the same closure sequentially. Reductions
//! always sum fixed-size chunk partials in index order, so results are
//! bitwise identical for every thread count and for both builds.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many elements loops stay sequential.
pub const PAR_MIN_LEN: usize = 4096;

/// Reduction chunk length. Part of the determinism contract: changing it
/// changes the rounding of every reduction.
pub const CHUNK: usize = 1024;

/// Calls `f(row_index, row)` for each `row_len`-sized row of `out`.
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(row_len > 0 && out.len() % row_len == 0);
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_MIN_LEN {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(j, row)| f(j, row));
        return;
    }
    out.chunks_mut(row_len).enumerate().for_each(|(j, row)| f(j, row));
}

/// Like [`for_each_row`] on two equally-shaped outputs.
pub fn for_each_row2<F>(a: &mut [f64], b: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_MIN_LEN {
        a.par_chunks_mut(row_len)
            .zip(b.par_chunks_mut(row_len))
            .enumerate()
            .for_each(|(j, (ra, rb))| f(j, ra, rb));
        return;
    }
    a.chunks_mut(row_len)
        .zip(b.chunks_mut(row_len))
        .enumerate()
        .for_each(|(j, (ra, rb))| f(j, ra, rb));
}

/// Calls `f(first_row, block)` on blocks of up to `rows` consecutive
/// `row_len`-sized rows, so per-task setup is paid once per block.
pub fn for_each_block<F>(out: &mut [f64], row_len: usize, rows: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    debug_assert!(row_len > 0 && rows > 0 && out.len() % row_len == 0);
    let len = row_len * rows;
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_MIN_LEN {
        out.par_chunks_mut(len).enumerate().for_each(|(b, blk)| f(b * rows, blk));
        return;
    }
    out.chunks_mut(len).enumerate().for_each(|(b, blk)| f(b * rows, blk));
}

/// Like [`for_each_block`] on two equally-shaped outputs.
pub fn for_each_block2<F>(a: &mut [f64], b: &mut [f64], row_len: usize, rows: usize, f: F)
where
    F: Fn(usize, &mut [f64], &mut [f64]) + Sync + Send,
{
    debug_assert_eq!(a.len(), b.len());
    let len = row_len * rows;
    #[cfg(feature = "parallel")]
    if a.len() >= PAR_MIN_LEN {
        a.par_chunks_mut(len)
            .zip(b.par_chunks_mut(len))
            .enumerate()
            .for_each(|(k, (x, y))| f(k * rows, x, y));
        return;
    }
    a.chunks_mut(len)
        .zip(b.chunks_mut(len))
        .enumerate()
        .for_each(|(k, (x, y))| f(k * rows, x, y));
}

/// Elementwise map `out[k] = f(k)`.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_MIN_LEN {
        out.par_iter_mut().enumerate().for_each(|(k, x)| *x = f(k));
        return;
    }
    out.iter_mut().enumerate().for_each(|(k, x)| *x = f(k));
}

/// Deterministic sum of `f` over `0..len`, where `f` sums one index range.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync + Send,
{
    let n_chunks = len.div_ceil(CHUNK);
    let chunk = |c: usize| f(c * CHUNK..((c + 1) * CHUNK).min(len));
    #[cfg(feature = "parallel")]
    if len >= PAR_MIN_LEN {
        let partials: Vec<f64> = (0..n_chunks).into_par_iter().map(chunk).collect();
        return partials.iter().sum();
    }
    (0..n_chunks).map(chunk).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum(a.len(), |r| a[r.clone()].iter().zip(&b[r]).map(|(x, y)| x * y).sum())
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    #[cfg(feature = "parallel")]
    if y.len() >= PAR_MIN_LEN {
        y.par_iter_mut().zip(x.par_iter()).for_each(|(y, x)| *y += alpha * x);
        return;
    }
    y.iter_mut().zip(x).for_each(|(y, x)| *y += alpha * x);
}

/// Runs independent jobs, in parallel when the feature is enabled. Output
/// order matches input order.
pub fn map_jobs<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
