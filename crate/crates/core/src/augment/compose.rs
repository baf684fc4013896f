use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::buffer::BufferSet;
use crate::numkernel::math::floor;
use crate::rl::{Sample, Source};
use crate::rng::Rng;
use crate::{Error, Result};

/// How a batch's real data is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paradigm {
    /// Fixed halves of online and offline data plus synthetic data.
    Concat5050,
    /// One real source per batch, online with probability `oorb_p`.
    Oorb,
}

impl Paradigm {
    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Concat5050 => "concat5050",
            Paradigm::Oorb => "oorb",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "concat5050" => Some(Paradigm::Concat5050),
            "oorb" => Some(Paradigm::Oorb),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixConfig {
    /// Synthetic fraction of every batch.
    pub r: f64,
    /// Share of generated samples labeled online.
    pub syn_online_fraction: f64,
    pub oorb_p: f64,
    /// Environment steps between model refreshes.
    pub refresh_every: u64,
    pub gen_count_per_refresh: usize,
    pub paradigm: Paradigm,
    pub guidance_w: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            r: 1.0 / 3.0,
            syn_online_fraction: 0.8,
            oorb_p: 0.5,
            refresh_every: 500,
            gen_count_per_refresh: 5000,
            paradigm: Paradigm::Concat5050,
            guidance_w: 1.0,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r >= 0.0 && self.r < 1.0) {
            return Err(Error::invalid("r must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.syn_online_fraction) {
            return Err(Error::invalid("syn_online_fraction must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.oorb_p) {
            return Err(Error::invalid("oorb_p must be in [0, 1]"));
        }
        if self.refresh_every == 0 {
            return Err(Error::invalid("refresh_every must be at least 1"));
        }
        if self.gen_count_per_refresh == 0 {
            return Err(Error::invalid("gen_count_per_refresh must be at least 1"));
        }
        if !self.guidance_w.is_finite() {
            return Err(Error::invalid("guidance_w must be finite"));
        }
        Ok(())
    }
}

/// `floor(x + 0.5)` for nonnegative `x`.
pub fn round_half_up(x: f64) -> usize {
    floor(x + 0.5) as usize
}

/// Per-source counts of a concatenated batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcatCounts {
    pub online: usize,
    pub offline: usize,
    pub syn_online: usize,
    pub syn_offline: usize,
}

/// `n_syn = round(r B)`, split by `round(f n_syn)`; the real remainder is
/// halved with the odd sample going offline.
pub fn concat_counts(batch_size: usize, r: f64, syn_online_fraction: f64) -> ConcatCounts {
    let n_syn = round_half_up(r * batch_size as f64).min(batch_size);
    let syn_online = round_half_up(syn_online_fraction * n_syn as f64).min(n_syn);
    let real = batch_size - n_syn;
    ConcatCounts {
        online: real / 2,
        offline: real - real / 2,
        syn_online,
        syn_offline: n_syn - syn_online,
    }
}

fn check_batch_size(batch_size: usize) -> Result<()> {
    if batch_size < 3 {
        return Err(Error::invalid("batch size must be at least 3"));
    }
    Ok(())
}

pub fn compose_batch_concat(
    buffers: &BufferSet,
    batch_size: usize,
    cfg: &MixConfig,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    check_batch_size(batch_size)?;
    let c = concat_counts(batch_size, cfg.r, cfg.syn_online_fraction);
    let mut out = Vec::with_capacity(batch_size);
    buffers.d_on.sample_into(c.online, rng, &mut out)?;
    buffers.d_off.sample_into(c.offline, rng, &mut out)?;
    buffers.d_on_syn.sample_into(c.syn_online, rng, &mut out)?;
    buffers
        .d_off_syn
        .sample_into(c.syn_offline, rng, &mut out)?;
    out.shuffle(rng);
    Ok(out)
}

pub fn compose_batch_oorb(
    buffers: &BufferSet,
    batch_size: usize,
    cfg: &MixConfig,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    check_batch_size(batch_size)?;
    let online = rng.random::<f64>() < cfg.oorb_p;
    let (real, syn) = if online {
        (Source::Online, Source::SynOnline)
    } else {
        (Source::Offline, Source::SynOffline)
    };
    let n_syn = round_half_up(cfg.r * batch_size as f64).min(batch_size);
    let mut out = Vec::with_capacity(batch_size);
    buffers
        .get(real)
        .sample_into(batch_size - n_syn, rng, &mut out)?;
    buffers.get(syn).sample_into(n_syn, rng, &mut out)?;
    out.shuffle(rng);
    Ok(out)
}

pub fn compose_batch(
    buffers: &BufferSet,
    batch_size: usize,
    cfg: &MixConfig,
    rng: &mut Rng,
) -> Result<Vec<Sample>> {
    match cfg.paradigm {
        Paradigm::Concat5050 => compose_batch_concat(buffers, batch_size, cfg, rng),
        Paradigm::Oorb => compose_batch_oorb(buffers, batch_size, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stated_counts() {
        let c = concat_counts(300, 1.0 / 3.0, 0.8);
        assert_eq!(
            (c.online, c.offline, c.syn_online, c.syn_offline),
            (100, 100, 80, 20)
        );
        let c = concat_counts(300, 0.0, 0.8);
        assert_eq!(
            (c.online, c.offline, c.syn_online, c.syn_offline),
            (150, 150, 0, 0)
        );
        let c = concat_counts(256, 1.0 / 3.0, 0.8);
        assert_eq!(
            (c.online, c.offline, c.syn_online, c.syn_offline),
            (85, 86, 68, 17)
        );
    }
}
