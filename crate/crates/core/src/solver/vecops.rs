//! Deterministic parallel vector kernels over flat sample buffers.
//!
//! Reductions split into fixed-size chunks and sum the partials in order, so
//! results do not depend on the thread pool.

use rayon::prelude::*;

use crate::scalar::Scalar;

const CHUNK: usize = 1 << 15;

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| x.as_f64() * y.as_f64()).sum())
        .collect();
    partial.into_iter().sum()
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> f64 {
    dot(a, a)
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn l1<T: Scalar>(a: &[T]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|v| v.as_f64().abs()).sum())
        .collect();
    partial.into_iter().sum()
}

/// `‖a - b‖²`.
pub(crate) fn dist_sq<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(&x, &y)| {
                    let d = x.as_f64() - y.as_f64();
                    d * d
                })
                .sum()
        })
        .collect();
    partial.into_iter().sum()
}

/// `y += alpha * x`.
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(y, &x)| *y += alpha * x);
}

/// `out[i] = f(a[i], b[i])`.
pub(crate) fn zip_map<T: Scalar>(a: &[T], b: &[T], out: &mut [T], f: impl Fn(T, T) -> T + Sync) {
    out.par_iter_mut()
        .zip(a.par_iter().zip(b.par_iter()))
        .for_each(|(o, (&a, &b))| *o = f(a, b));
}

/// `a[i] = f(a[i], b[i])`.
pub(crate) fn update<T: Scalar>(a: &mut [T], b: &[T], f: impl Fn(T, T) -> T + Sync) {
    a.par_iter_mut().zip(b.par_iter()).for_each(|(a, &b)| *a = f(*a, b));
}
