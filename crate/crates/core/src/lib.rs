//! Offline-to-online reinforcement learning with classifier-free guided
//! diffusion augmentation.
//!
//! The crate is `no_std` (with `alloc`) so the numeric and algorithmic pieces
//! stay free of IO. File formats, configuration files and the command line
//! driver live in the `o2o-lab` companion crate.
//!
//! Module map:
//!
//! - [`numkernel`]: dense matrices, residual ReLU MLPs with exact reverse-mode
//!   gradients, Adam and the cosine learning-rate schedule.
//! - [`env`]: deterministic toy continuous-control environments, behavior
//!   policies and offline dataset collection.
//! - [`rl`]: the IQL-style base learner with a source-gated conservative
//!   regularizer.
//! - [`diffusion`]: transition codec, EDM-preconditioned conditional denoiser,
//!   guidance combination and the stochastic sampler.
//! - [`augment`]: replay buffers, batch composition and the online phase loop.
//! - [`diagnostics`]: histogram Jensen-Shannon divergence and curve aggregation.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod diagnostics;
pub mod diffusion;
pub mod env;
mod error;
pub mod numkernel;
pub mod rl;
pub mod rng;

pub use error::{Error, Result};
