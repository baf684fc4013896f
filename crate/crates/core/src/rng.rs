//! Named random streams derived from one master seed.
//!
//! Each consumer of randomness gets its own ChaCha stream so that enabling
//! one feature (say, diffusion sampling) never shifts the numbers another
//! consumer (say, the environment) sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Env = 1,
    Agent = 2,
    DiffusionTrain = 3,
    DiffusionSample = 4,
    Composition = 5,
    Eval = 6,
    Dataset = 7,
    Init = 8,
}

/// A fresh generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// A generator for the `index`-th sub-stream of `stream`, used when a
/// consumer needs several independent, order-insensitive generators
/// (one per refresh, one per output chunk).
pub fn substream(seed: u64, stream: Stream, index: u64) -> Rng {
    let mixed = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(stream as u64);
    rng
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    use rand::Rng as _;
    rng.sample(rand_distr::StandardNormal)
}
