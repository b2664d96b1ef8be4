//! Max pooling, adaptive average pooling and bilinear resizing over NCHW.

use crate::scalar::Real;

/// Returns pooled values and, per output cell, the flat input index of the
/// winning element. Ties go to the first maximum in row-major window order.
pub(crate) fn max_pool_forward<T: Real>(
    x: &[T],
    [n, c, h, w]: [usize; 4],
    k: usize,
    stride: usize,
) -> (Vec<T>, Vec<usize>) {
    let (ho, wo) = ((h - k) / stride + 1, (w - k) / stride + 1);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_i = base + oy * stride * w + ox * stride;
                let mut best = x[best_i];
                for ky in 0..k {
                    for kx in 0..k {
                        let i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

/// Integer bin `[floor(i·len/out), ceil((i+1)·len/out))` of an adaptive pool.
pub(crate) fn adaptive_bin(i: usize, len: usize, out: usize) -> (usize, usize) {
    let start = i * len / out;
    let end = ((i + 1) * len).div_ceil(out);
    (start, end)
}

pub(crate) fn adaptive_avg_forward<T: Real>(
    x: &[T],
    [n, c, h, w]: [usize; 4],
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let (y0, y1) = adaptive_bin(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = adaptive_bin(j, w, ow);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        acc += x[base + y * w + xx];
                    }
                }
                out.push(acc / T::of(((y1 - y0) * (x1 - x0)) as f64));
            }
        }
    }
    out
}

pub(crate) fn adaptive_avg_backward<T: Real>(
    dy: &[T],
    [n, c, h, w]: [usize; 4],
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            let (y0, y1) = adaptive_bin(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = adaptive_bin(j, w, ow);
                let g = dy[(plane * oh + i) * ow + j] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dx[base + y * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Per output coordinate: the two source taps and the weight of the second.
/// Half-pixel convention: `src = (dst + 0.5)·in/out − 0.5`, clamped at 0.
pub(crate) fn bilinear_taps<T: Real>(input: usize, output: usize) -> Vec<(usize, usize, T)> {
    let ratio = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let src = ((d as f64 + 0.5) * ratio - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, T::of(src - i0 as f64))
        })
        .collect()
}

pub(crate) fn resize_forward<T: Real>(
    x: &[T],
    [n, c, h, w]: [usize; 4],
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let ty = bilinear_taps::<T>(h, oh);
    let tx = bilinear_taps::<T>(w, ow);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        for &(y0, y1, ly) in &ty {
            for &(x0, x1, lx) in &tx {
                let top = src[y0 * w + x0] * (T::one() - lx) + src[y0 * w + x1] * lx;
                let bot = src[y1 * w + x0] * (T::one() - lx) + src[y1 * w + x1] * lx;
                out.push(top * (T::one() - ly) + bot * ly);
            }
        }
    }
    out
}

pub(crate) fn resize_backward<T: Real>(
    dy: &[T],
    [n, c, h, w]: [usize; 4],
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let ty = bilinear_taps::<T>(h, oh);
    let tx = bilinear_taps::<T>(w, ow);
    let mut dx = vec![T::zero(); n * c * h * w];
    for plane in 0..n * c {
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        let g_plane = &dy[plane * oh * ow..(plane + 1) * oh * ow];
        for (i, &(y0, y1, ly)) in ty.iter().enumerate() {
            for (j, &(x0, x1, lx)) in tx.iter().enumerate() {
                let g = g_plane[i * ow + j];
                let (gt, gb) = (g * (T::one() - ly), g * ly);
                dst[y0 * w + x0] += gt * (T::one() - lx);
                dst[y0 * w + x1] += gt * lx;
                dst[y1 * w + x0] += gb * (T::one() - lx);
                dst[y1 * w + x1] += gb * lx;
            }
        }
    }
    dx
}
