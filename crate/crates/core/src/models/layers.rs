//! Parameter builder and the layer shapes shared by both architectures.
//! Layers hold indices into the network's parameter store; the matching
//! tape variables are passed in at forward time.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::autodiff::{ConvGeometry, ParamStore, Tape, Tensor, Var};
use crate::scalar::Real;

pub(crate) const NORM_EPS: f64 = 1e-6;

pub(crate) struct Builder<'r, T> {
    pub params: ParamStore<T>,
    rng: &'r mut ChaCha8Rng,
}

impl<'r, T: Real> Builder<'r, T> {
    pub fn new(rng: &'r mut ChaCha8Rng) -> Self {
        Self {
            params: ParamStore::new(),
            rng,
        }
    }

    /// He-uniform weights, bound `sqrt(6 / fan_in)`; zero bias.
    pub fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        geom: ConvGeometry,
    ) -> Conv {
        let cin_g = cin / geom.groups;
        let fan_in = (cin_g * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let shape = [cout, cin_g, kernel, kernel];
        let rng = &mut *self.rng;
        let weight = Tensor::from_fn(&shape, |_| T::of(rng.random_range(-bound..bound)));
        let w = self.params.push(format!("{name}.weight"), weight);
        let b = self.params.push(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Conv { w, b, geom }
    }

    pub fn norm(&mut self, name: &str, channels: usize) -> Norm {
        let gain = self
            .params
            .push(format!("{name}.gain"), Tensor::full(&[channels], T::one()));
        let offset = self
            .params
            .push(format!("{name}.offset"), Tensor::zeros(&[channels]));
        Norm { gain, offset }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv {
    w: usize,
    b: usize,
    geom: ConvGeometry,
}

impl Conv {
    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var, ModelError> {
        Ok(tape.conv2d(x, p[self.w], Some(p[self.b]), self.geom)?)
    }

    pub fn apply_relu<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, ModelError> {
        let y = self.apply(tape, p, x)?;
        Ok(tape.relu(y))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Norm {
    gain: usize,
    offset: usize,
}

impl Norm {
    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var, ModelError> {
        Ok(tape.channel_norm(x, p[self.gain], p[self.offset], T::of(NORM_EPS))?)
    }
}

/// Two same-padded 3×3 convolutions, each followed by relu.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DoubleConv {
    first: Conv,
    second: Conv,
}

impl DoubleConv {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, cin: usize, cout: usize) -> Self {
        let same = ConvGeometry::new(1, 1, 1);
        Self {
            first: b.conv(&format!("{name}.0"), cin, cout, 3, same),
            second: b.conv(&format!("{name}.1"), cout, cout, 3, same),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var, ModelError> {
        let y = self.first.apply_relu(tape, p, x)?;
        self.second.apply_relu(tape, p, y)
    }
}

/// Depthwise 7×7 → channel norm → 1×1 expand ×4 → gelu → 1×1 project,
/// added back onto the block input.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvNextBlock {
    depthwise: Conv,
    norm: Norm,
    expand: Conv,
    project: Conv,
}

impl ConvNextBlock {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, channels: usize) -> Self {
        let pointwise = ConvGeometry::default();
        Self {
            depthwise: b.conv(
                &format!("{name}.dw"),
                channels,
                channels,
                7,
                ConvGeometry::new(1, 3, channels),
            ),
            norm: b.norm(&format!("{name}.norm"), channels),
            expand: b.conv(&format!("{name}.pw1"), channels, 4 * channels, 1, pointwise),
            project: b.conv(&format!("{name}.pw2"), 4 * channels, channels, 1, pointwise),
        }
    }

    pub fn apply<T: Real>(&self, tape: &mut Tape<T>, p: &[Var], x: Var) -> Result<Var, ModelError> {
        let y = self.depthwise.apply(tape, p, x)?;
        let y = self.norm.apply(tape, p, y)?;
        let y = self.expand.apply(tape, p, y)?;
        let y = tape.gelu(y);
        let y = self.project.apply(tape, p, y)?;
        Ok(tape.add(x, y)?)
    }
}
