//! Forward values of the tensor ops against direct loop implementations.

mod common;

use approx::assert_abs_diff_eq;
use common::{random_tensor, rng};
use contrail_core::autodiff::{ConvGeometry, Tape, Tensor};

fn at(t: &Tensor<f64>, idx: [usize; 4]) -> f64 {
    let s = t.shape();
    t.data()[((idx[0] * s[1] + idx[1]) * s[2] + idx[2]) * s[3] + idx[3]]
}

fn conv_loop(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, stride: usize, pad: usize, groups: usize) -> Vec<f64> {
    let [n, cin, h, wd] = x.dims4("x").unwrap();
    let [cout, cg, kh, kw] = w.dims4("w").unwrap();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let og = cout / groups;
    assert_eq!(cg * groups, cin);
    let mut out = Vec::new();
    for bn in 0..n {
        for o in 0..cout {
            let g = o / og;
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b.map_or(0.0, |b| b.data()[o]);
                    for c in 0..cg {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let r = (i * stride + ki) as isize - pad as isize;
                                let q = (j * stride + kj) as isize - pad as isize;
                                if r < 0 || q < 0 || r >= h as isize || q >= wd as isize {
                                    continue;
                                }
                                acc += at(x, [bn, g * cg + c, r as usize, q as usize]) * at(w, [o, c, ki, kj]);
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_loop() {
    let mut r = rng(11);
    for (xs, ws, stride, pad, groups) in [
        ([2, 3, 7, 6], [4, 3, 3, 3], 1, 1, 1),
        ([1, 4, 9, 9], [4, 2, 3, 3], 2, 1, 2),
        ([1, 6, 8, 8], [6, 1, 7, 7], 1, 3, 6),
        ([2, 5, 4, 4], [3, 5, 1, 1], 1, 0, 1),
        ([1, 2, 6, 6], [2, 2, 2, 2], 2, 0, 1),
    ] {
        let x = random_tensor(&mut r, &xs, 1.0);
        let w = random_tensor(&mut r, &ws, 1.0);
        let b = random_tensor(&mut r, &[ws[0]], 1.0);
        let mut t = Tape::new();
        let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
        let y = t.conv2d(xv, wv, Some(bv), ConvGeometry::new(stride, pad, groups)).unwrap();
        let expected = conv_loop(&x, &w, Some(&b), stride, pad, groups);
        for (a, e) in t.value(y).data().iter().zip(&expected) {
            assert_abs_diff_eq!(*a, *e, epsilon = 1e-12);
        }
        assert_eq!(t.value(y).len(), expected.len());
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let mut t = Tape::<f64>::new();
    let x = t.constant(Tensor::zeros(&[1, 3, 4, 4]));
    let w = t.constant(Tensor::zeros(&[2, 2, 3, 3]));
    assert!(t.conv2d(x, w, None, ConvGeometry::default()).is_err());
    let big = t.constant(Tensor::zeros(&[2, 3, 5, 5]));
    assert!(t.conv2d(x, big, None, ConvGeometry::default()).is_err());
}

fn resize_loop(x: &Tensor<f64>, oh: usize, ow: usize) -> Vec<f64> {
    let [n, c, h, w] = x.dims4("x").unwrap();
    let src = |d: usize, inn: usize, out: usize| {
        let s = ((d as f64 + 0.5) * inn as f64 / out as f64 - 0.5).max(0.0);
        let i0 = (s.floor() as usize).min(inn - 1);
        let i1 = (i0 + 1).min(inn - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for i in 0..oh {
                let (r0, r1, fy) = src(i, h, oh);
                for j in 0..ow {
                    let (c0, c1, fx) = src(j, w, ow);
                    let top = at(x, [b, ch, r0, c0]) * (1.0 - fx) + at(x, [b, ch, r0, c1]) * fx;
                    let bot = at(x, [b, ch, r1, c0]) * (1.0 - fx) + at(x, [b, ch, r1, c1]) * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    out
}

#[test]
fn bilinear_matches_loop_and_half_pixel_example() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
    let y = t.upsample_bilinear(x, 2).unwrap();
    assert_eq!(t.value(y).shape(), &[1, 1, 2, 4]);
    assert_eq!(t.value(y).data(), &[1.0, 1.25, 1.75, 2.0, 1.0, 1.25, 1.75, 2.0]);

    let mut r = rng(12);
    for (shape, oh, ow) in [([1, 2, 5, 4], 7, 9), ([2, 1, 8, 8], 3, 5), ([1, 1, 3, 3], 12, 12), ([1, 1, 1, 1], 4, 2)] {
        let xt = random_tensor(&mut r, &shape, 1.0);
        let mut t = Tape::new();
        let x = t.constant(xt.clone());
        let y = t.resize_bilinear(x, oh, ow).unwrap();
        for (a, e) in t.value(y).data().iter().zip(resize_loop(&xt, oh, ow)) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-12);
        }
    }
}

#[test]
fn pools_match_loops() {
    let mut r = rng(13);
    let xt = random_tensor(&mut r, &[2, 3, 7, 5], 1.0);
    let mut t = Tape::new();
    let x = t.constant(xt.clone());
    let y = t.max_pool2d(x, 2, 2).unwrap();
    assert_eq!(t.value(y).shape(), &[2, 3, 3, 2]);
    let mut k = 0;
    for b in 0..2 {
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..2 {
                    let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                        .iter()
                        .map(|(di, dj)| at(&xt, [b, c, 2 * i + di, 2 * j + dj]))
                        .fold(f64::NEG_INFINITY, f64::max);
                    assert_eq!(t.value(y).data()[k], m);
                    k += 1;
                }
            }
        }
    }

    for (oh, ow) in [(1, 1), (2, 3), (3, 2), (6, 6)] {
        let y = t.adaptive_avg_pool(x, oh, ow).unwrap();
        let mut k = 0;
        for b in 0..2 {
            for c in 0..3 {
                for i in 0..oh {
                    let (r0, r1) = (i * 7 / oh, ((i + 1) * 7).div_ceil(oh));
                    for j in 0..ow {
                        let (c0, c1) = (j * 5 / ow, ((j + 1) * 5).div_ceil(ow));
                        let mut s = 0.0;
                        for rr in r0..r1 {
                            for cc in c0..c1 {
                                s += at(&xt, [b, c, rr, cc]);
                            }
                        }
                        let mean = s / ((r1 - r0) * (c1 - c0)) as f64;
                        assert_abs_diff_eq!(t.value(y).data()[k], mean, epsilon = 1e-12);
                        k += 1;
                    }
                }
            }
        }
    }
}

#[test]
fn channel_norm_and_softmax_match_loops() {
    let mut r = rng(14);
    let xt = random_tensor(&mut r, &[2, 4, 3, 2], 2.0);
    let gain = random_tensor(&mut r, &[4], 1.0);
    let off = random_tensor(&mut r, &[4], 1.0);
    let mut t = Tape::new();
    let x = t.constant(xt.clone());
    let (g, o) = (t.constant(gain.clone()), t.constant(off.clone()));
    let y = t.channel_norm(x, g, o, 1e-6).unwrap();
    let s = t.softmax(x, 1).unwrap();
    for b in 0..2 {
        for i in 0..3 {
            for j in 0..2 {
                let v: Vec<f64> = (0..4).map(|c| at(&xt, [b, c, i, j])).collect();
                let mean = v.iter().sum::<f64>() / 4.0;
                let var = v.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / 4.0;
                let z: f64 = v.iter().map(|q| q.exp()).sum();
                for c in 0..4 {
                    let e = (v[c] - mean) / (var + 1e-6).sqrt() * gain.data()[c] + off.data()[c];
                    assert_abs_diff_eq!(at(t.value(y), [b, c, i, j]), e, epsilon = 1e-12);
                    assert_abs_diff_eq!(at(t.value(s), [b, c, i, j]), v[c].exp() / z, epsilon = 1e-14);
                }
            }
        }
    }
}

#[test]
fn softmax_survives_huge_logits() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::<f64>::new(vec![1, 2, 1, 1], vec![1000.0, -1000.0]).unwrap());
    let s = t.softmax(x, 1).unwrap();
    assert_eq!(t.value(s).data(), &[1.0, 0.0]);
    let l = t.weighted_cross_entropy(x, &[0], &[1.0, 1.0]).unwrap();
    assert!(t.value(l).item().unwrap().is_finite());
}

#[test]
fn gelu_tanh_form() {
    let mut t = Tape::new();
    let x = t.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 1.5]).unwrap());
    let y = t.gelu(x);
    let k = (2.0 / std::f64::consts::PI).sqrt();
    for (v, g) in [-1.0f64, 0.0, 1.5].iter().zip(t.value(y).data()) {
        let e = 0.5 * v * (1.0 + (k * (v + 0.044715 * v.powi(3))).tanh());
        assert_abs_diff_eq!(*g, e, epsilon = 1e-15);
    }
}
