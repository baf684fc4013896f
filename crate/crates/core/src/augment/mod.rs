//! Replay buffers, synthetic-data refresh, batch composition and the
//! offline and online training loops.

mod buffer;
mod compose;
mod pipeline;

pub use buffer::{BufferCapacities, BufferSet, ReplayBuffer};
pub use compose::{
    compose_batch, compose_batch_concat, compose_batch_oorb, concat_counts, round_half_up,
    ConcatCounts, MixConfig, Paradigm,
};
pub use pipeline::{
    evaluate, maybe_refresh, pretrain_offline, refresh_and_generate, run_online_phase, CurveRow,
    Generation, Generator, GeneratorConfig, OfflineConfig, OnlineConfig, OnlineOutcome,
    RefreshStats,
};
