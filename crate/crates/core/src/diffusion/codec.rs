use alloc::vec::Vec;

use crate::env::{EnvSpec, Transition};
use crate::numkernel::math::sqrt;
use crate::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension standardization of transitions laid out as
/// `state | action | reward | next_state | terminal`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCodec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl TransitionCodec {
    pub fn dim_for(state_dim: usize, action_dim: usize) -> usize {
        2 * state_dim + action_dim + 2
    }

    pub fn dim(&self) -> usize {
        Self::dim_for(self.state_dim, self.action_dim)
    }

    /// Unstandardized layout vector; the terminal flag maps to 0 or 1.
    pub fn raw(t: &Transition) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * t.state.len() + t.action.len() + 2);
        v.extend_from_slice(&t.state);
        v.extend_from_slice(&t.action);
        v.push(t.reward);
        v.extend_from_slice(&t.next_state);
        v.push(if t.terminal { 1.0 } else { 0.0 });
        v
    }

    pub fn fit(corpus: &[Transition]) -> Result<Self> {
        let first = corpus
            .first()
            .ok_or_else(|| Error::invalid("cannot fit codec on an empty corpus"))?;
        let (sd, ad) = (first.state.len(), first.action.len());
        let dim = Self::dim_for(sd, ad);
        let n = corpus.len() as f64;
        let mut mean = alloc::vec![0.0; dim];
        for t in corpus {
            if t.state.len() != sd || t.action.len() != ad || t.next_state.len() != sd {
                return Err(Error::invalid(
                    "corpus transitions have inconsistent dimensions",
                ));
            }
            for (m, v) in mean.iter_mut().zip(Self::raw(t)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; dim];
        for t in corpus {
            for ((s, v), m) in var.iter_mut().zip(Self::raw(t)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| sqrt(s / n).max(STD_FLOOR))
            .collect();
        Ok(TransitionCodec {
            state_dim: sd,
            action_dim: ad,
            mean,
            std,
        })
    }

    pub fn encode(&self, t: &Transition) -> Result<Vec<f64>> {
        if t.state.len() != self.state_dim
            || t.action.len() != self.action_dim
            || t.next_state.len() != self.state_dim
        {
            return Err(Error::invalid("transition does not match codec dimensions"));
        }
        Ok(Self::raw(t)
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn decode(&self, x: &[f64]) -> Result<Transition> {
        if x.len() != self.dim() {
            return Err(Error::invalid("encoded vector has the wrong length"));
        }
        let raw: Vec<f64> = x
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| v * s + m)
            .collect();
        let (sd, ad) = (self.state_dim, self.action_dim);
        Ok(Transition {
            state: raw[..sd].to_vec(),
            action: raw[sd..sd + ad].to_vec(),
            reward: raw[sd + ad],
            next_state: raw[sd + ad + 1..2 * sd + ad + 1].to_vec(),
            terminal: raw[2 * sd + ad + 1] > 0.5,
        })
    }

    /// Clamps a decoded transition into the environment: actions to
    /// `[-1, 1]`, states to the environment bounds.
    pub fn clip_to_env(t: &mut Transition, spec: &EnvSpec) {
        t.action.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
        spec.clip_state(&mut t.state);
        spec.clip_state(&mut t.next_state);
    }

    /// Index range of the state block inside an encoded vector.
    pub fn state_range(&self) -> core::ops::Range<usize> {
        0..self.state_dim
    }

    pub fn action_range(&self) -> core::ops::Range<usize> {
        self.state_dim..self.state_dim + self.action_dim
    }
}
