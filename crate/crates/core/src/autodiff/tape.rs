use super::activation::Activation;
use super::conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvShape};
use super::loss::{
    softmax_backward, softmax_forward, split_axis, weighted_ce_backward, weighted_ce_forward,
};
use super::norm::{channel_norm_backward, channel_norm_forward, NormCache};
use super::pool::{
    adaptive_avg_backward, adaptive_avg_forward, max_pool_forward, resize_backward,
    resize_forward,
};
use super::{AutodiffError, Tensor};
use crate::scalar::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        shape: ConvShape,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    AdaptiveAvgPool {
        input: Var,
    },
    Resize {
        input: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    ChannelNorm {
        input: Var,
        gain: Var,
        offset: Var,
        cache: NormCache<T>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Softmax {
        input: Var,
        axis: usize,
    },
    WeightedCrossEntropy {
        logits: Var,
        target: Vec<usize>,
        weights: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// Record of executed operations, in execution order.
///
/// Every operation appends one node after the nodes of its inputs, so the
/// node order is a topological order and [`Tape::backward`] walks it in
/// reverse.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor; zeros when nothing flowed into `v`.
    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let shape = &self.shapes[v.0];
        match self.get(v) {
            Some(g) => Tensor::new(shape.clone(), g.to_vec()).expect("gradient matches shape"),
            None => Tensor::zeros(shape),
        }
    }
}

fn shape_err<R>(msg: String) -> Result<R, AutodiffError> {
    Err(AutodiffError::ShapeMismatch(msg))
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant input (no gradient requested).
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// A leaf whose gradient `backward` will report.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, true, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, requires_grad: bool, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, rg, op)
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return shape_err(format!("{what}: {sa:?} vs {sb:?}"));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "add")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.derived(out, &[a, b], Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape(a, b, "mul")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.derived(out, &[a, b], Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.derived(out, &[a], Op::Scale(a, factor))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.derived(Tensor::scalar(s), &[a], Op::Sum(a))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        let wt = self.value(weight);
        let shape = ConvShape::new(x.dims4("conv2d input")?, wt.dims4("conv2d weight")?, geom)?;
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != [shape.cout] {
                return shape_err(format!("conv2d bias {bs:?}, expected [{}]", shape.cout));
            }
        }
        let data = conv2d_forward(
            x.data(),
            wt.data(),
            bias.map(|b| self.value(b).data()),
            &shape,
        );
        let out = Tensor::new(shape.out_shape(), data)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.derived(
            out,
            &inputs,
            Op::Conv2d {
                input,
                weight,
                bias,
                shape,
            },
        ))
    }

    /// `k×k` max pooling. Window positions start at 0 and step by `stride`.
    pub fn max_pool2d(&mut self, input: Var, k: usize, stride: usize) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        let [n, c, h, w] = x.dims4("max_pool2d")?;
        if k == 0 || stride == 0 || k > h || k > w {
            return shape_err(format!("max_pool2d: window {k} stride {stride} on {h}x{w}"));
        }
        let (data, argmax) = max_pool_forward(x.data(), [n, c, h, w], k, stride);
        let out = Tensor::new(vec![n, c, (h - k) / stride + 1, (w - k) / stride + 1], data)?;
        Ok(self.derived(out, &[input], Op::MaxPool { input, argmax }))
    }

    pub fn adaptive_avg_pool(
        &mut self,
        input: Var,
        out_h: usize,
        out_w: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        let dims = x.dims4("adaptive_avg_pool")?;
        if out_h == 0 || out_w == 0 {
            return shape_err("adaptive_avg_pool: output extents must be positive".into());
        }
        let data = adaptive_avg_forward(x.data(), dims, out_h, out_w);
        let out = Tensor::new(vec![dims[0], dims[1], out_h, out_w], data)?;
        Ok(self.derived(out, &[input], Op::AdaptiveAvgPool { input }))
    }

    /// Bilinear resize to arbitrary extents, half-pixel (align-corners-false)
    /// sampling.
    pub fn resize_bilinear(
        &mut self,
        input: Var,
        out_h: usize,
        out_w: usize,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        let dims = x.dims4("resize_bilinear")?;
        if out_h == 0 || out_w == 0 || dims[2] == 0 || dims[3] == 0 {
            return shape_err("resize_bilinear: extents must be positive".into());
        }
        let data = resize_forward(x.data(), dims, out_h, out_w);
        let out = Tensor::new(vec![dims[0], dims[1], out_h, out_w], data)?;
        Ok(self.derived(out, &[input], Op::Resize { input }))
    }

    /// Integer-factor bilinear upsampling.
    pub fn upsample_bilinear(&mut self, input: Var, scale: usize) -> Result<Var, AutodiffError> {
        if scale == 0 {
            return shape_err("upsample_bilinear: scale must be at least 1".into());
        }
        let [_, _, h, w] = self.value(input).dims4("upsample_bilinear")?;
        self.resize_bilinear(input, h * scale, w * scale)
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let out = self.value(input).map(|x| kind.apply(x));
        self.derived(out, &[input], Op::Activation { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn gelu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    /// Normalize the channel vector at every `(n, h, w)` to zero mean and unit
    /// variance (biased, `eps`-stabilized), then apply per-channel gain and
    /// offset.
    pub fn channel_norm(
        &mut self,
        input: Var,
        gain: Var,
        offset: Var,
        eps: T,
    ) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        let dims = x.dims4("channel_norm")?;
        let c = dims[1];
        if c == 0 {
            return shape_err("channel_norm: no channels".into());
        }
        let (g, o) = (self.value(gain), self.value(offset));
        if g.shape() != [c] || o.shape() != [c] {
            return shape_err(format!(
                "channel_norm: gain {:?} / offset {:?} for {c} channels",
                g.shape(),
                o.shape()
            ));
        }
        let (data, cache) = channel_norm_forward(x.data(), dims, g.data(), o.data(), eps);
        let out = Tensor::new(dims.to_vec(), data)?;
        Ok(self.derived(
            out,
            &[input, gain, offset],
            Op::ChannelNorm {
                input,
                gain,
                offset,
                cache,
            },
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = inputs
            .first()
            .ok_or_else(|| AutodiffError::ShapeMismatch("concat of nothing".into()))?;
        let base = self.value(*first).shape().to_vec();
        if axis >= base.len() {
            return shape_err(format!("concat: axis {axis} on rank {}", base.len()));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            let agree = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !agree {
                return shape_err(format!("concat: {s:?} vs {base:?} off axis {axis}"));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let out = Tensor::new(shape, data)?;
        Ok(self.derived(
            out,
            inputs,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    pub fn softmax(&mut self, input: Var, axis: usize) -> Result<Var, AutodiffError> {
        let x = self.value(input);
        if axis >= x.rank() {
            return shape_err(format!("softmax: axis {axis} on rank {}", x.rank()));
        }
        let data = softmax_forward(x.data(), split_axis(x.shape(), axis));
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.derived(out, &[input], Op::Softmax { input, axis }))
    }

    /// Class-weighted cross-entropy averaged over all `N·H·W` pixels.
    /// `target` holds one class index per pixel in `[N, H, W]` order.
    pub fn weighted_cross_entropy(
        &mut self,
        logits: Var,
        target: &[usize],
        weights: &[T],
    ) -> Result<Var, AutodiffError> {
        let z = self.value(logits);
        let dims = z.dims4("weighted_cross_entropy")?;
        let [n, c, h, w] = dims;
        if target.len() != n * h * w {
            return shape_err(format!(
                "weighted_cross_entropy: {} targets for {n}x{h}x{w} pixels",
                target.len()
            ));
        }
        if weights.len() != c {
            return shape_err(format!(
                "weighted_cross_entropy: {} weights for {c} classes",
                weights.len()
            ));
        }
        if let Some(&bad) = target.iter().find(|&&y| y >= c) {
            return shape_err(format!("weighted_cross_entropy: class {bad} >= {c}"));
        }
        let (loss, probs) = weighted_ce_forward(z.data(), dims, target, weights);
        Ok(self.derived(
            Tensor::scalar(loss),
            &[logits],
            Op::WeightedCrossEntropy {
                logits,
                target: target.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar `loss`. Gradients accumulate additively
    /// where a value feeds several operations.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, contribution: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.iter_mut().zip(&contribution) {
                    *a += *b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Mul(a, b) => {
                if rg(*a) {
                    let d = g.iter().zip(val(*b).data()).map(|(&g, &y)| g * y).collect();
                    self.accumulate(grads, *a, d);
                }
                if rg(*b) {
                    let d = g.iter().zip(val(*a).data()).map(|(&g, &x)| g * x).collect();
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, f) => {
                self.accumulate(grads, *a, g.iter().map(|&x| x * *f).collect());
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, vec![g[0]; val(*a).len()]);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                shape,
            } => {
                let cg = conv2d_backward(val(*input).data(), val(*weight).data(), g, shape);
                self.accumulate(grads, *input, cg.input);
                self.accumulate(grads, *weight, cg.weight);
                if let Some(b) = bias {
                    self.accumulate(grads, *b, cg.bias);
                }
            }
            Op::MaxPool { input, argmax } => {
                let mut d = vec![T::zero(); val(*input).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] += gv;
                }
                self.accumulate(grads, *input, d);
            }
            Op::AdaptiveAvgPool { input } => {
                let dims = val(*input).dims4("").expect("checked on forward");
                let [_, _, oh, ow] = node.value.dims4("").expect("checked on forward");
                self.accumulate(grads, *input, adaptive_avg_backward(g, dims, oh, ow));
            }
            Op::Resize { input } => {
                let dims = val(*input).dims4("").expect("checked on forward");
                let [_, _, oh, ow] = node.value.dims4("").expect("checked on forward");
                self.accumulate(grads, *input, resize_backward(g, dims, oh, ow));
            }
            Op::Activation { input, kind } => {
                let d = val(*input)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| gv * kind.derivative(x))
                    .collect();
                self.accumulate(grads, *input, d);
            }
            Op::ChannelNorm {
                input,
                gain,
                offset,
                cache,
            } => {
                let dims = val(*input).dims4("").expect("checked on forward");
                let (dx, dg, db) = channel_norm_backward(g, dims, val(*gain).data(), cache);
                self.accumulate(grads, *input, dx);
                self.accumulate(grads, *gain, dg);
                self.accumulate(grads, *offset, db);
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(node.value.shape(), *axis);
                let mut pieces: Vec<Vec<T>> = inputs
                    .iter()
                    .map(|v| Vec::with_capacity(val(*v).len()))
                    .collect();
                let mut at = 0;
                for _ in 0..outer {
                    for (k, v) in inputs.iter().enumerate() {
                        let chunk = val(*v).shape()[*axis] * inner;
                        pieces[k].extend_from_slice(&g[at..at + chunk]);
                        at += chunk;
                    }
                }
                for (v, d) in inputs.iter().zip(pieces) {
                    self.accumulate(grads, *v, d);
                }
            }
            Op::Softmax { input, axis } => {
                let parts = split_axis(node.value.shape(), *axis);
                let d = softmax_backward(node.value.data(), g, parts);
                self.accumulate(grads, *input, d);
            }
            Op::WeightedCrossEntropy {
                logits,
                target,
                weights,
                probs,
            } => {
                let dims = val(*logits).dims4("").expect("checked on forward");
                let d = weighted_ce_backward(probs, dims, target, weights, g[0]);
                self.accumulate(grads, *logits, d);
            }
        }
    }
}
