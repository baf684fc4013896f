//! Conditional diffusion over encoded transitions.
//!
//! The denoiser follows the EDM parameterization: noisy inputs are
//! `x + sigma * n`, the network `F` is wrapped as
//! `D(x; sigma, c) = c_skip(sigma) * x + c_out(sigma) * F(c_in(sigma) * x, c_noise(sigma), c)`,
//! and training draws `ln(sigma) ~ N(-1.2, 1.2^2)`. Conditioning labels are
//! one-hot inputs to the first layer, so each label (including `Null`) owns a
//! learned column that is added to the projected noise-level features.
//!
//! Sampling uses the stochastic second-order sampler with churn, combining the
//! conditional and unconditional predictions at every evaluation with
//! [`cfg_score`].

mod codec;
mod denoiser;
mod sampler;

pub use codec::TransitionCodec;
pub use denoiser::{
    denoise_train_step, denoising_loss, train_denoiser, ConditionLabel, Denoise, Denoiser,
    DenoiserShape, TrainNoise, TrainStats, TrainerState,
};
pub use sampler::{
    cfg_score, classifier_grad_estimate, forward_noise, generate_transitions, sample, NoiseSchedule,
};
