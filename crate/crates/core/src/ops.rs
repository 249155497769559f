//! Elementary dense operations.

use crate::error::{Error, Result};
use crate::kernels::dot;
use crate::tensor::{Real, Tensor};

/// `W x + b` for `W: [m, n]`, `b: [m]`, `x: [n]`.
pub fn linear<T: Real>(w: &Tensor<T>, b: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let ws = w.shape();
    if ws.len() != 2 || x.shape() != [ws[1]] {
        return Err(Error::dim("linear (weights vs input)", ws, x.shape()));
    }
    if b.shape() != [ws[0]] {
        return Err(Error::dim("linear (weights vs bias)", ws, b.shape()));
    }
    let n = ws[1];
    let out = w
        .data()
        .chunks_exact(n)
        .zip(b.data())
        .map(|(row, &bias)| dot(row, x.data()) + bias)
        .collect();
    Tensor::vector(out)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn tanh<T: Real>(x: T) -> T {
    x.tanh()
}

pub fn sigmoid_tensor<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    t.map(sigmoid)
}

pub fn tanh_tensor<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    t.map(tanh)
}

/// Max-shifted softmax over a flat slice, written into `out`.
pub fn softmax_into<T: Real>(v: &[T], out: &mut [T]) {
    debug_assert_eq!(v.len(), out.len());
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Softmax over all entries of `v`, preserving its shape.
pub fn softmax<T: Real>(v: &Tensor<T>) -> Result<Tensor<T>> {
    if v.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let mut out = Tensor::zeros(v.shape());
    softmax_into(v.data(), out.data_mut());
    Ok(out)
}

/// `log Σ exp(v)`, stable for large magnitudes; `-inf` for an all `-inf` input.
pub fn log_sum_exp<T: Real>(v: &[T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + v.iter().map(|&x| (x - max).exp()).sum::<T>().ln()
}

pub fn log_softmax_into<T: Real>(v: &[T], out: &mut [T]) {
    let lse = log_sum_exp(v);
    for (o, &x) in out.iter_mut().zip(v) {
        *o = x - lse;
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}
