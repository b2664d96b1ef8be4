//! Softmax and class-weighted cross-entropy.

use crate::scalar::Real;

/// Splits a shape around `axis` into (outer, axis length, inner).
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Max-subtracted softmax along the middle extent of `(outer, len, inner)`.
pub(crate) fn softmax_forward<T: Real>(x: &[T], (outer, len, inner): (usize, usize, usize)) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let m = (0..len).map(|k| x[at(k)]).fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for k in 0..len {
                let e = (x[at(k)] - m).exp();
                out[at(k)] = e;
                z += e;
            }
            for k in 0..len {
                out[at(k)] /= z;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Real>(
    s: &[T],
    dy: &[T],
    (outer, len, inner): (usize, usize, usize),
) -> Vec<T> {
    let mut dx = vec![T::zero(); s.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot: T = (0..len).map(|k| dy[at(k)] * s[at(k)]).sum();
            for k in 0..len {
                dx[at(k)] = s[at(k)] * (dy[at(k)] - dot);
            }
        }
    }
    dx
}

/// `−(1/M)·Σ w_y·log softmax(z)_y` over every pixel of `[N, C, H, W]` logits,
/// with `M = N·H·W`. Returns the loss and the class probabilities.
pub(crate) fn weighted_ce_forward<T: Real>(
    logits: &[T],
    [n, c, h, w]: [usize; 4],
    target: &[usize],
    weights: &[T],
) -> (T, Vec<T>) {
    let probs = softmax_forward(logits, (n, c, h * w));
    let hw = h * w;
    let mut total = T::zero();
    for b in 0..n {
        for pos in 0..hw {
            let y = target[b * hw + pos];
            let at = |k: usize| (b * c + k) * hw + pos;
            // log-sum-exp in the logit domain avoids log(0) when a
            // probability underflows.
            let m = (0..c).map(|k| logits[at(k)]).fold(T::neg_infinity(), T::max);
            let lse = m + (0..c).map(|k| (logits[at(k)] - m).exp()).sum::<T>().ln();
            total += weights[y] * (lse - logits[at(y)]);
        }
    }
    (total / T::of((n * hw) as f64), probs)
}

pub(crate) fn weighted_ce_backward<T: Real>(
    probs: &[T],
    [n, c, h, w]: [usize; 4],
    target: &[usize],
    weights: &[T],
    upstream: T,
) -> Vec<T> {
    let hw = h * w;
    let scale = upstream / T::of((n * hw) as f64);
    let mut dx = vec![T::zero(); probs.len()];
    for b in 0..n {
        for pos in 0..hw {
            let y = target[b * hw + pos];
            let wy = weights[y] * scale;
            for k in 0..c {
                let at = (b * c + k) * hw + pos;
                let onehot = if k == y { T::one() } else { T::zero() };
                dx[at] = wy * (probs[at] - onehot);
            }
        }
    }
    dx
}
