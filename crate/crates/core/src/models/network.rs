use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::Builder;
use super::unet::UNetLayout;
use super::upernet::UperLayout;
use super::{Architecture, ModelConfig, ModelError};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::scalar::Real;

#[derive(Debug, Clone)]
enum Layout {
    Unet(UNetLayout),
    Uper(UperLayout),
}

/// A parameterized segmentation network.
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Real> Network<T> {
    /// Deterministic construction: the same config and seed give bit-identical
    /// parameters.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder::new(&mut rng);
        let layout = match config.architecture {
            Architecture::UnetTiny => Layout::Unet(UNetLayout::build(&mut b, config)),
            Architecture::UpernetMini => Layout::Uper(UperLayout::build(&mut b, config)),
        };
        Ok(Self {
            config: config.clone(),
            params: b.params,
            layout,
        })
    }

    /// Rebuild a network around existing parameters (e.g. from a checkpoint).
    pub fn from_params(config: &ModelConfig, params: ParamStore<T>) -> Result<Self, ModelError> {
        let mut net = Self::build(config, 0)?;
        if !net.params.same_layout(&params) {
            return Err(ModelError::BadConfig(
                "parameter names or shapes do not match the architecture".into(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Record every parameter on `tape`; `trainable` selects whether their
    /// gradients are tracked.
    pub fn register(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.param(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Logits `[N, 2, H, W]` for an `[N, C, H, W]` input already on the tape.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        input: Var,
    ) -> Result<Var, ModelError> {
        let [_, c, h, w] = tape.value(input).dims4("network input")?;
        if c != self.config.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "network expects {} input channels, got {c}",
                self.config.in_channels
            )));
        }
        self.config.check_input(h, w)?;
        if params.len() != self.params.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} parameter variables for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        match &self.layout {
            Layout::Unet(l) => l.forward(tape, params, input),
            Layout::Uper(l) => l.forward(tape, params, input),
        }
    }

    /// Class-weighted cross-entropy of the network on one batch. Returns the
    /// loss variable and the parameter variables (for reading gradients).
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        input: &Tensor<T>,
        target: &[usize],
        class_weights: &[T],
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let params = self.register(tape, true);
        let x = tape.constant(input.clone());
        let logits = self.forward(tape, &params, x)?;
        let loss = tape.weighted_cross_entropy(logits, target, class_weights)?;
        Ok((loss, params))
    }

    /// Contrail probability (softmax channel 1), shape `[N, H, W]`.
    pub fn predict_proba(&self, input: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
        let mut tape = Tape::new();
        let params = self.register(&mut tape, false);
        let x = tape.constant(input.clone());
        let logits = self.forward(&mut tape, &params, x)?;
        let probs = tape.softmax(logits, 1)?;
        let p = tape.value(probs);
        let [n, _, h, w] = p.dims4("probabilities")?;
        let hw = h * w;
        let mut out = Vec::with_capacity(n * hw);
        for b in 0..n {
            out.extend_from_slice(&p.data()[(b * 2 + 1) * hw..(b * 2 + 2) * hw]);
        }
        Ok(Tensor::new(vec![n, h, w], out)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes() {
        for cfg in [
            ModelConfig::unet_tiny(6, 8, 3),
            ModelConfig::upernet_mini(6, 8, 3),
        ] {
            let net = Network::<f32>::build(&cfg, 1).unwrap();
            let x = Tensor::from_fn(&[2, 6, 64, 64], |i| ((i % 13) as f32 - 6.0) * 0.1);
            let mut tape = Tape::new();
            let p = net.register(&mut tape, false);
            let xv = tape.constant(x);
            let y = net.forward(&mut tape, &p, xv).unwrap();
            assert_eq!(tape.value(y).shape(), &[2, 2, 64, 64]);
        }
    }

    #[test]
    fn indivisible_input_is_bad_config() {
        let net = Network::<f32>::build(&ModelConfig::unet_tiny(6, 8, 3), 1).unwrap();
        let x = Tensor::zeros(&[1, 6, 60, 60]);
        assert!(matches!(net.predict_proba(&x), Err(ModelError::BadConfig(_))));
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let cfg = ModelConfig::upernet_mini(6, 8, 3);
        let a = Network::<f32>::build(&cfg, 7).unwrap();
        let b = Network::<f32>::build(&cfg, 7).unwrap();
        let c = Network::<f32>::build(&cfg, 8).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn from_params_checks_layout() {
        let a = Network::<f32>::build(&ModelConfig::unet_tiny(6, 8, 3), 7).unwrap();
        let ok = Network::from_params(a.config(), a.params().clone()).unwrap();
        assert_eq!(ok.params(), a.params());
        assert!(Network::from_params(&ModelConfig::unet_tiny(6, 8, 2), a.params().clone()).is_err());
    }
}
