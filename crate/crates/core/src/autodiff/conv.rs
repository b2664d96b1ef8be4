//! 2-D cross-correlation over NCHW tensors via im2col.

use std::borrow::Cow;

use rayon::prelude::*;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::AutodiffError;
use crate::scalar::Real;

/// Stride, zero padding and channel grouping of a convolution.
/// `groups == in_channels` gives a depthwise convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Self {
            stride,
            padding,
            groups,
        }
    }
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self::new(1, 0, 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvShape {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
}

impl ConvShape {
    pub fn new(
        x: [usize; 4],
        wt: [usize; 4],
        geom: ConvGeometry,
    ) -> Result<Self, AutodiffError> {
        let [n, cin, h, w] = x;
        let [cout, cin_g, kh, kw] = wt;
        let err = |m: String| Err(AutodiffError::ShapeMismatch(format!("conv2d: {m}")));
        if geom.groups == 0 || geom.stride == 0 {
            return err("stride and groups must be positive".into());
        }
        if cin % geom.groups != 0 || cout % geom.groups != 0 {
            return err(format!(
                "channels {cin}->{cout} not divisible by groups {}",
                geom.groups
            ));
        }
        if cin / geom.groups != cin_g {
            return err(format!(
                "weight expects {cin_g} input channels per group, input has {}",
                cin / geom.groups
            ));
        }
        let (hp, wp) = (h + 2 * geom.padding, w + 2 * geom.padding);
        if kh == 0 || kw == 0 || hp < kh || wp < kw {
            return err(format!("kernel {kh}x{kw} does not fit padded input {hp}x{wp}"));
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            ho: (hp - kh) / geom.stride + 1,
            wo: (wp - kw) / geom.stride + 1,
            stride: geom.stride,
            pad: geom.padding,
            groups: geom.groups,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.n, self.cout, self.ho, self.wo]
    }

    fn cin_g(&self) -> usize {
        self.cin / self.groups
    }

    fn cout_g(&self) -> usize {
        self.cout / self.groups
    }

    /// Rows of the column matrix (one per kernel tap).
    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }

    /// Columns of the column matrix (one per output pixel).
    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Source coordinate of tap `t` for output coordinate `o`, if inside.
    #[inline]
    fn src(&self, o: usize, t: usize, extent: usize) -> Option<usize> {
        let s = (o * self.stride + t) as isize - self.pad as isize;
        (s >= 0 && (s as usize) < extent).then_some(s as usize)
    }

    fn im2col<'a, T: Real>(&self, x: &'a [T]) -> Cow<'a, [T]> {
        if self.is_pointwise() {
            return Cow::Borrowed(x);
        }
        let (p, plane) = (self.p(), self.h * self.w);
        let mut col = vec![T::zero(); self.k() * p];
        for c in 0..self.cin_g() {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.ho {
                        let Some(iy) = self.src(oy, ky, self.h) else {
                            continue;
                        };
                        let src_row = &x[c * plane + iy * self.w..][..self.w];
                        let dst = &mut col[row + oy * self.wo..][..self.wo];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                *d = src_row[ix];
                            }
                        }
                    }
                }
            }
        }
        Cow::Owned(col)
    }

    fn col2im<T: Real>(&self, col: &[T], dx: &mut [T]) {
        if self.is_pointwise() {
            for (d, &c) in dx.iter_mut().zip(col) {
                *d += c;
            }
            return;
        }
        let (p, plane) = (self.p(), self.h * self.w);
        for c in 0..self.cin_g() {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * p;
                    for oy in 0..self.ho {
                        let Some(iy) = self.src(oy, ky, self.h) else {
                            continue;
                        };
                        let src = &col[row + oy * self.wo..][..self.wo];
                        let dst_row = &mut dx[c * plane + iy * self.w..][..self.w];
                        for (ox, &v) in src.iter().enumerate() {
                            if let Some(ix) = self.src(ox, kx, self.w) {
                                dst_row[ix] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    x: &[T],
    weight: &[T],
    bias: Option<&[T]>,
    s: &ConvShape,
) -> Vec<T> {
    let (p, k, cin_g, cout_g) = (s.p(), s.k(), s.cin_g(), s.cout_g());
    let in_item = s.cin * s.h * s.w;
    let mut out = vec![T::zero(); s.n * s.cout * p];
    if p == 0 {
        return out;
    }
    out.par_chunks_mut(s.cout * p)
        .enumerate()
        .for_each(|(n, out_n)| {
            let x_n = &x[n * in_item..(n + 1) * in_item];
            for g in 0..s.groups {
                let x_g = &x_n[g * cin_g * s.h * s.w..(g + 1) * cin_g * s.h * s.w];
                let col = s.im2col(x_g);
                let w_g = &weight[g * cout_g * k..(g + 1) * cout_g * k];
                let out_g = &mut out_n[g * cout_g * p..(g + 1) * cout_g * p];
                if let Some(b) = bias {
                    for (o, row) in out_g.chunks_mut(p).enumerate() {
                        row.fill(b[g * cout_g + o]);
                    }
                }
                gemm_nn(w_g, &col, out_g, cout_g, k, p);
            }
        });
    out
}

pub(crate) struct ConvGrads<T> {
    pub input: Vec<T>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

pub(crate) fn conv2d_backward<T: Real>(
    x: &[T],
    weight: &[T],
    dy: &[T],
    s: &ConvShape,
) -> ConvGrads<T> {
    let (p, k, cin_g, cout_g) = (s.p(), s.k(), s.cin_g(), s.cout_g());
    let in_item = s.cin * s.h * s.w;
    let per_item: Vec<(Vec<T>, Vec<T>)> = (0..s.n)
        .into_par_iter()
        .map(|n| {
            let x_n = &x[n * in_item..(n + 1) * in_item];
            let dy_n = &dy[n * s.cout * p..(n + 1) * s.cout * p];
            let mut dx_n = vec![T::zero(); in_item];
            let mut dw_n = vec![T::zero(); weight.len()];
            for g in 0..s.groups {
                let plane_span = g * cin_g * s.h * s.w..(g + 1) * cin_g * s.h * s.w;
                let col = s.im2col(&x_n[plane_span.clone()]);
                let w_g = &weight[g * cout_g * k..(g + 1) * cout_g * k];
                let dy_g = &dy_n[g * cout_g * p..(g + 1) * cout_g * p];
                gemm_nt(
                    dy_g,
                    &col,
                    &mut dw_n[g * cout_g * k..(g + 1) * cout_g * k],
                    cout_g,
                    p,
                    k,
                );
                let mut dcol = vec![T::zero(); k * p];
                gemm_tn(w_g, dy_g, &mut dcol, cout_g, k, p);
                s.col2im(&dcol, &mut dx_n[plane_span]);
            }
            (dx_n, dw_n)
        })
        .collect();

    let mut input = Vec::with_capacity(s.n * in_item);
    let mut dweight = vec![T::zero(); weight.len()];
    for (dx_n, dw_n) in per_item {
        input.extend_from_slice(&dx_n);
        for (a, b) in dweight.iter_mut().zip(&dw_n) {
            *a += *b;
        }
    }
    let mut bias = vec![T::zero(); s.cout];
    for n in 0..s.n {
        for (o, b) in bias.iter_mut().enumerate() {
            let start = (n * s.cout + o) * p;
            *b += dy[start..start + p].iter().copied().sum::<T>();
        }
    }
    ConvGrads {
        input,
        weight: dweight,
        bias,
    }
}
