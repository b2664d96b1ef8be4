//! Per-position channel normalization (layer norm over C at each pixel).

use crate::scalar::Real;

pub(crate) struct NormCache<T> {
    pub normalized: Vec<T>,
    pub inv_std: Vec<T>,
}

pub(crate) fn channel_norm_forward<T: Real>(
    x: &[T],
    [n, c, h, w]: [usize; 4],
    gain: &[T],
    offset: &[T],
    eps: T,
) -> (Vec<T>, NormCache<T>) {
    let hw = h * w;
    let cf = T::of(c as f64);
    let mut out = vec![T::zero(); x.len()];
    let mut normalized = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); n * hw];
    for b in 0..n {
        let base = b * c * hw;
        for pos in 0..hw {
            let at = |ch: usize| base + ch * hw + pos;
            let mean = (0..c).map(|ch| x[at(ch)]).sum::<T>() / cf;
            let var = (0..c)
                .map(|ch| {
                    let d = x[at(ch)] - mean;
                    d * d
                })
                .sum::<T>()
                / cf;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[b * hw + pos] = inv;
            for ch in 0..c {
                let xn = (x[at(ch)] - mean) * inv;
                normalized[at(ch)] = xn;
                out[at(ch)] = gain[ch] * xn + offset[ch];
            }
        }
    }
    (
        out,
        NormCache {
            normalized,
            inv_std,
        },
    )
}

/// Returns (d input, d gain, d offset).
pub(crate) fn channel_norm_backward<T: Real>(
    dy: &[T],
    [n, c, h, w]: [usize; 4],
    gain: &[T],
    cache: &NormCache<T>,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hw = h * w;
    let cf = T::of(c as f64);
    let mut dx = vec![T::zero(); dy.len()];
    let mut dgain = vec![T::zero(); c];
    let mut doffset = vec![T::zero(); c];
    for b in 0..n {
        let base = b * c * hw;
        for pos in 0..hw {
            let at = |ch: usize| base + ch * hw + pos;
            let mut mean_g = T::zero();
            let mut mean_gx = T::zero();
            for ch in 0..c {
                let g = dy[at(ch)] * gain[ch];
                mean_g += g;
                mean_gx += g * cache.normalized[at(ch)];
                dgain[ch] += dy[at(ch)] * cache.normalized[at(ch)];
                doffset[ch] += dy[at(ch)];
            }
            mean_g /= cf;
            mean_gx /= cf;
            let inv = cache.inv_std[b * hw + pos];
            for ch in 0..c {
                let xn = cache.normalized[at(ch)];
                dx[at(ch)] = inv * (dy[at(ch)] * gain[ch] - mean_g - xn * mean_gx);
            }
        }
    }
    (dx, dgain, doffset)
}
