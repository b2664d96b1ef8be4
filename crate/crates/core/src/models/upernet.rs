use super::layers::{Builder, Conv, ConvNextBlock, Norm};
use super::{ModelConfig, ModelError};
use crate::autodiff::{ConvGeometry, Tape, Var};
use crate::scalar::Real;

/// Pyramid pooling bin sizes.
pub(crate) const PPM_BINS: [usize; 4] = [1, 2, 3, 6];

#[derive(Debug, Clone)]
struct Stage {
    downsample: Option<(Norm, Conv)>,
    block: ConvNextBlock,
}

#[derive(Debug, Clone)]
pub(crate) struct UperLayout {
    stem: Conv,
    stem_norm: Norm,
    stages: Vec<Stage>,
    ppm: Vec<Conv>,
    ppm_bottleneck: Conv,
    /// Lateral 1×1 convs for every stage except the deepest.
    laterals: Vec<Conv>,
    fpn_convs: Vec<Conv>,
    fuse: Conv,
    head: Conv,
}

impl UperLayout {
    pub fn build<T: Real>(b: &mut Builder<'_, T>, cfg: &ModelConfig) -> Self {
        let c = cfg.base_width;
        let width = |s: usize| c << s;
        let patchify = ConvGeometry::new(2, 0, 1);
        let same = ConvGeometry::new(1, 1, 1);
        let pointwise = ConvGeometry::default();

        let stem = b.conv("stem", cfg.in_channels, width(0), 2, patchify);
        let stem_norm = b.norm("stem.norm", width(0));
        let mut stages = Vec::with_capacity(cfg.depth);
        for s in 0..cfg.depth {
            let downsample = (s > 0).then(|| {
                (
                    b.norm(&format!("stage{s}.down.norm"), width(s - 1)),
                    b.conv(&format!("stage{s}.down"), width(s - 1), width(s), 2, patchify),
                )
            });
            let block = ConvNextBlock::build(b, &format!("stage{s}.block"), width(s));
            stages.push(Stage { downsample, block });
        }

        let top = width(cfg.depth - 1);
        let ppm = PPM_BINS
            .iter()
            .map(|bin| b.conv(&format!("ppm.bin{bin}"), top, c, 1, pointwise))
            .collect();
        let ppm_bottleneck = b.conv("ppm.bottleneck", top + PPM_BINS.len() * c, c, 3, same);
        let laterals = (0..cfg.depth - 1)
            .map(|s| b.conv(&format!("fpn.lateral{s}"), width(s), c, 1, pointwise))
            .collect();
        let fpn_convs = (0..cfg.depth - 1)
            .map(|s| b.conv(&format!("fpn.out{s}"), c, c, 3, same))
            .collect();
        let fuse = b.conv("fpn.fuse", cfg.depth * c, c, 3, same);
        let head = b.conv("head", c, cfg.num_classes, 1, pointwise);
        Self {
            stem,
            stem_norm,
            stages,
            ppm,
            ppm_bottleneck,
            laterals,
            fpn_convs,
            fuse,
            head,
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        p: &[Var],
        input: Var,
    ) -> Result<Var, ModelError> {
        // backbone
        let x = self.stem.apply(tape, p, input)?;
        let mut x = self.stem_norm.apply(tape, p, x)?;
        let mut feats = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            if let Some((norm, conv)) = &stage.downsample {
                x = norm.apply(tape, p, x)?;
                x = conv.apply(tape, p, x)?;
            }
            x = stage.block.apply(tape, p, x)?;
            feats.push(x);
        }

        // pyramid pooling on the deepest stage
        let deepest = *feats.last().expect("depth >= 2");
        let [_, _, dh, dw] = tape.value(deepest).dims4("upernet deepest stage")?;
        let mut pooled = vec![deepest];
        for (conv, &bin) in self.ppm.iter().zip(&PPM_BINS) {
            let y = tape.adaptive_avg_pool(deepest, bin, bin)?;
            let y = conv.apply_relu(tape, p, y)?;
            pooled.push(tape.resize_bilinear(y, dh, dw)?);
        }
        let joined = tape.concat(&pooled, 1)?;
        let top = self.ppm_bottleneck.apply_relu(tape, p, joined)?;

        // top-down pathway with lateral connections
        let levels = feats.len();
        let mut pyramid = vec![top; levels];
        for s in (0..levels - 1).rev() {
            let lateral = self.laterals[s].apply_relu(tape, p, feats[s])?;
            let up = tape.upsample_bilinear(pyramid[s + 1], 2)?;
            pyramid[s] = tape.add(lateral, up)?;
        }
        for (level, conv) in pyramid.iter_mut().zip(&self.fpn_convs) {
            *level = conv.apply_relu(tape, p, *level)?;
        }

        // fuse all levels at the finest resolution
        let mut fused = Vec::with_capacity(levels);
        fused.push(pyramid[0]);
        for (s, &level) in pyramid.iter().enumerate().skip(1) {
            fused.push(tape.upsample_bilinear(level, 1 << s)?);
        }
        let joined = tape.concat(&fused, 1)?;
        let y = self.fuse.apply_relu(tape, p, joined)?;
        let logits = self.head.apply(tape, p, y)?;
        // the stem halves the resolution
        Ok(tape.upsample_bilinear(logits, 2)?)
    }
}
