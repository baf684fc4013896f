use super::math::{pow, sqrt};
use super::mlp::{Gradients, Mlp};
use crate::{Error, Result};

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Gradients,
    pub second_moment: Gradients,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Zeroed moments with the usual `(0.9, 0.999, 1e-8)` constants.
    pub fn new(net: &Mlp) -> Self {
        Self::with_betas(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &Mlp, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            first_moment: Gradients::zeros_like(net),
            second_moment: Gradients::zeros_like(net),
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !grads.matches(params) || !self.first_moment.matches(params) {
            return Err(Error::invalid(
                "adam: gradient or moment shapes differ from parameters",
            ));
        }

        self.step_count += 1;
        let t = self.step_count as f64;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - pow(b1, t);
        let c2 = 1.0 - pow(b2, t);
        let moments = self
            .first_moment
            .layers
            .iter_mut()
            .zip(self.second_moment.layers.iter_mut());
        for ((layer, g), (m, v)) in params
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(moments)
        {
            let p = layer
                .weight
                .as_mut_slice()
                .iter_mut()
                .chain(layer.bias.iter_mut());
            let g = g.weight.as_slice().iter().chain(g.bias.iter());
            let m = m.weight.as_mut_slice().iter_mut().chain(m.bias.iter_mut());
            let v = v.weight.as_mut_slice().iter_mut().chain(v.bias.iter_mut());
            for (((p, g), m), v) in p.zip(g).zip(m).zip(v) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
