use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::Transition;
use crate::rl::{Sample, Source};
use crate::rng::Rng;
use crate::{Error, Result};

/// Fixed-capacity FIFO ring of transitions that all carry one source tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    source: Source,
    capacity: usize,
    storage: Vec<Sample>,
    /// Position of the oldest entry once the ring is full.
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, source: Source) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("buffer capacity must be positive"));
        }
        Ok(ReplayBuffer {
            source,
            capacity,
            storage: Vec::new(),
            head: 0,
            inserted: 0,
        })
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Total insertions since construction, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends, evicting the oldest entry when full.
    pub fn push(&mut self, transition: Transition) {
        let sample = Sample::new(transition, self.source);
        if self.storage.len() < self.capacity {
            self.storage.push(sample);
        } else {
            self.storage[self.head] = sample;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    pub fn extend<I: IntoIterator<Item = Transition>>(&mut self, items: I) {
        items.into_iter().for_each(|t| self.push(t));
    }

    pub fn clear(&mut self) {
        self.storage.clear();
        self.head = 0;
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.iter().map(|s| &s.transition)
    }

    /// One entry drawn uniformly.
    pub fn sample(&self, rng: &mut Rng) -> Result<&Sample> {
        if self.storage.is_empty() {
            return Err(Error::Composition {
                buffer: self.source.as_str(),
            });
        }
        Ok(&self.storage[rng.random_range(0..self.storage.len())])
    }

    /// `n` entries drawn uniformly with replacement.
    pub fn sample_into(&self, n: usize, rng: &mut Rng, out: &mut Vec<Sample>) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        if self.storage.is_empty() {
            return Err(Error::Composition {
                buffer: self.source.as_str(),
            });
        }
        for _ in 0..n {
            out.push(self.storage[rng.random_range(0..self.storage.len())].clone());
        }
        Ok(())
    }

    /// True when every stored entry carries this buffer's tag and the size
    /// is within capacity.
    pub fn is_consistent(&self) -> bool {
        self.storage.len() <= self.capacity && self.storage.iter().all(|s| s.source == self.source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferCapacities {
    pub online: usize,
    pub offline: usize,
    pub syn_online: usize,
    pub syn_offline: usize,
}

impl Default for BufferCapacities {
    fn default() -> Self {
        BufferCapacities {
            online: 1_000_000,
            offline: 1_000_000,
            syn_online: 1_000_000,
            syn_offline: 1_000_000,
        }
    }
}

/// The four buffers of the online phase.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferSet {
    pub d_on: ReplayBuffer,
    pub d_off: ReplayBuffer,
    pub d_on_syn: ReplayBuffer,
    pub d_off_syn: ReplayBuffer,
}

impl BufferSet {
    pub fn new(caps: BufferCapacities) -> Result<Self> {
        Ok(BufferSet {
            d_on: ReplayBuffer::new(caps.online, Source::Online)?,
            d_off: ReplayBuffer::new(caps.offline, Source::Offline)?,
            d_on_syn: ReplayBuffer::new(caps.syn_online, Source::SynOnline)?,
            d_off_syn: ReplayBuffer::new(caps.syn_offline, Source::SynOffline)?,
        })
    }

    pub fn get(&self, source: Source) -> &ReplayBuffer {
        match source {
            Source::Online => &self.d_on,
            Source::Offline => &self.d_off,
            Source::SynOnline => &self.d_on_syn,
            Source::SynOffline => &self.d_off_syn,
        }
    }

    pub fn get_mut(&mut self, source: Source) -> &mut ReplayBuffer {
        match source {
            Source::Online => &mut self.d_on,
            Source::Offline => &mut self.d_off,
            Source::SynOnline => &mut self.d_on_syn,
            Source::SynOffline => &mut self.d_off_syn,
        }
    }

    pub fn is_consistent(&self) -> bool {
        Source::ALL
            .iter()
            .all(|&s| self.get(s).source() == s && self.get(s).is_consistent())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t(x: f64) -> Transition {
        Transition {
            state: vec![x],
            action: vec![0.0],
            reward: x,
            next_state: vec![x],
            terminal: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3, Source::Online).unwrap();
        b.extend((0..5).map(|i| t(i as f64)));
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 5);
        let kept: Vec<f64> = b.transitions().map(|t| t.reward).collect();
        assert_eq!(kept, vec![2.0, 3.0, 4.0]);
        assert!(b.is_consistent());
    }

    #[test]
    fn empty_buffer_names_itself() {
        let b = ReplayBuffer::new(3, Source::SynOffline).unwrap();
        let mut rng = crate::rng::stream(0, crate::rng::Stream::Composition);
        assert_eq!(
            b.sample(&mut rng).unwrap_err(),
            Error::Composition {
                buffer: "syn_offline"
            }
        );
    }

    #[test]
    fn clear_resets_ring() {
        let mut b = ReplayBuffer::new(2, Source::SynOnline).unwrap();
        b.extend((0..3).map(|i| t(i as f64)));
        b.clear();
        assert!(b.is_empty());
        b.push(t(9.0));
        assert_eq!(
            b.transitions().map(|t| t.reward).collect::<Vec<_>>(),
            vec![9.0]
        );
    }
}
