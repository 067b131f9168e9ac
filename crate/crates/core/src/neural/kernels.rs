//! Row-level dense kernels shared by the differentiable graph and the
//! incremental synthesis path. Both paths must call these in the same order
//! so that their results agree bit for bit.

use rayon::prelude::*;

use super::Float;

/// Work size (multiply-adds) above which matrix products split rows across threads.
const PAR_THRESHOLD: usize = 1 << 16;

/// `out_row += a_row · b`, where `b` is a row-major `a_row.len() × m` matrix.
#[inline]
pub fn accumulate_row<T: Float>(a_row: &[T], b: &[T], m: usize, out_row: &mut [T]) {
    debug_assert_eq!(out_row.len(), m);
    debug_assert_eq!(b.len(), a_row.len() * m);
    for (k, &a) in a_row.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        let b_row = &b[k * m..(k + 1) * m];
        for (o, &bv) in out_row.iter_mut().zip(b_row) {
            *o += a * bv;
        }
    }
}

#[inline]
pub fn add_bias_row<T: Float>(row: &mut [T], bias: &[T]) {
    for (v, &b) in row.iter_mut().zip(bias) {
        *v += b;
    }
}

/// `out += a · b` for `a: n×k`, `b: k×m`, `out: n×m`.
pub fn matmul_acc<T: Float>(a: &[T], n: usize, k: usize, b: &[T], m: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(out.len(), n * m);
    if m == 0 || n == 0 {
        return;
    }
    if n * k * m >= PAR_THRESHOLD && n > 1 {
        out.par_chunks_mut(m)
            .zip(a.par_chunks(k.max(1)))
            .for_each(|(o, a_row)| accumulate_row(&a_row[..k], b, m, o));
    } else {
        for (o, a_row) in out.chunks_mut(m).zip(a.chunks(k.max(1))) {
            accumulate_row(&a_row[..k], b, m, o);
        }
    }
}

pub fn matmul<T: Float>(a: &[T], n: usize, k: usize, b: &[T], m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * m];
    matmul_acc(a, n, k, b, m, &mut out);
    out
}

/// `out += a · bᵀ` for `a: n×m`, `b: k×m`, `out: n×k`.
pub fn matmul_a_bt_acc<T: Float>(a: &[T], n: usize, m: usize, b: &[T], k: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), n * k);
    if k == 0 || n == 0 {
        return;
    }
    let body = |(o, a_row): (&mut [T], &[T])| {
        for (j, ov) in o.iter_mut().enumerate() {
            let b_row = &b[j * m..(j + 1) * m];
            let mut s = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                s += x * y;
            }
            *ov += s;
        }
    };
    if n * k * m >= PAR_THRESHOLD && n > 1 {
        out.par_chunks_mut(k)
            .zip(a.par_chunks(m.max(1)))
            .for_each(body);
    } else {
        out.chunks_mut(k).zip(a.chunks(m.max(1))).for_each(body);
    }
}

/// `out += aᵀ · c` for `a: n×k`, `c: n×m`, `out: k×m`.
pub fn matmul_at_b_acc<T: Float>(a: &[T], n: usize, k: usize, c: &[T], m: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), k * m);
    if k == 0 || m == 0 {
        return;
    }
    let body = |(kk, o): (usize, &mut [T])| {
        for i in 0..n {
            let a_v = a[i * k + kk];
            if a_v == T::zero() {
                continue;
            }
            for (ov, &cv) in o.iter_mut().zip(&c[i * m..(i + 1) * m]) {
                *ov += a_v * cv;
            }
        }
    };
    if n * k * m >= PAR_THRESHOLD && k > 1 {
        out.par_chunks_mut(m).enumerate().for_each(body);
    } else {
        out.chunks_mut(m).enumerate().for_each(body);
    }
}

#[inline]
pub fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable log-sum-exp of one row.
pub fn log_sum_exp<T: Float>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = row.iter().map(|&v| (v - max).exp()).sum();
    max + s.ln()
}

pub fn softmax_row<T: Float>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o = *o / s;
    }
}
