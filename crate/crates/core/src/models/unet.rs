use super::layers::{Builder, Conv, DoubleConv};
use super::{ModelConfig, ModelError};
use crate::autodiff::{ConvGeometry, Tape, Var};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub(crate) struct UNetLayout {
    down: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    /// Decoder blocks, deepest first.
    up: Vec<DoubleConv>,
    head: Conv,
}

impl UNetLayout {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Self {
        let width = |level: usize| cfg.base_width << level;
        let mut down = Vec::with_capacity(cfg.depth);
        let mut cin = cfg.in_channels;
        for level in 0..cfg.depth {
            down.push(DoubleConv::build(b, &format!("enc{level}"), cin, width(level)));
            cin = width(level);
        }
        let bottleneck = DoubleConv::build(b, "bottleneck", cin, width(cfg.depth));
        let mut up = Vec::with_capacity(cfg.depth);
        for level in (0..cfg.depth).rev() {
            up.push(DoubleConv::build(
                b,
                &format!("dec{level}"),
                width(level + 1) + width(level),
                width(level),
            ));
        }
        let head = b.conv(
            "head",
            width(0),
            cfg.num_classes,
            1,
            ConvGeometry::default(),
        );
        Self {
            down,
            bottleneck,
            up,
            head,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        input: Var,
    ) -> Result<Var, ModelError> {
        let mut skips = Vec::with_capacity(self.down.len());
        let mut x = input;
        for block in &self.down {
            x = block.apply(tape, p, x)?;
            skips.push(x);
            x = tape.max_pool2d(x, 2, 2)?;
        }
        x = self.bottleneck.apply(tape, p, x)?;
        for (block, skip) in self.up.iter().zip(skips.into_iter().rev()) {
            let up = tape.upsample_bilinear(x, 2)?;
            let joined = tape.concat(&[up, skip], 1)?;
            x = block.apply(tape, p, joined)?;
        }
        self.head.apply(tape, p, x)
    }
}
