//! Histogram Jensen-Shannon divergence between sample sets, the buffer
//! divergence report, and learning-curve aggregation.
//!
//! Each dimension is histogrammed separately on a shared uniform grid over
//! the pooled range of both sets, the per-dimension divergences (in bits)
//! are averaged, and so every value lies in `[0, 1]`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng as _;

use crate::augment::BufferSet;
use crate::diffusion::TransitionCodec;
use crate::numkernel::math::{log2, sqrt};
use crate::rl::Source;
use crate::rng::{stream, Stream};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// Per-dimension bin edges. A value `x` lands in bin `i` when
/// `edges[i] <= x < edges[i + 1]`; the last bin also takes its right edge,
/// and values outside the grid go to the nearest end bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramGrid {
    edges: Vec<Vec<f64>>,
}

fn check_sets<R: AsRef<[f64]>>(p: &[R], q: &[R]) -> Result<usize> {
    let dim = p
        .first()
        .ok_or_else(|| Error::invalid("first sample set is empty"))?
        .as_ref()
        .len();
    if q.is_empty() {
        return Err(Error::invalid("second sample set is empty"));
    }
    if dim == 0 || p.iter().chain(q).any(|v| v.as_ref().len() != dim) {
        return Err(Error::invalid("samples have inconsistent dimensions"));
    }
    if p.iter()
        .chain(q)
        .any(|v| v.as_ref().iter().any(|x| !x.is_finite()))
    {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(dim)
}

impl HistogramGrid {
    /// Uniform grid with `bins` bins per dimension over the pooled min/max.
    /// A constant dimension gets the unit interval centered on its value.
    pub fn fit<R: AsRef<[f64]>>(p: &[R], q: &[R], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::invalid("histogram needs at least one bin"));
        }
        let dim = check_sets(p, q)?;
        let mut edges = Vec::with_capacity(dim);
        for j in 0..dim {
            let values = p.iter().chain(q).map(|v| v.as_ref()[j]);
            let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
                (a.min(x), b.max(x))
            });
            if hi - lo <= 0.0 {
                lo -= 0.5;
                hi += 0.5;
            }
            let width = (hi - lo) / bins as f64;
            let mut e: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
            e.push(hi);
            edges.push(e);
        }
        Ok(HistogramGrid { edges })
    }

    pub fn from_edges(edges: Vec<Vec<f64>>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::invalid("grid needs at least one dimension"));
        }
        for e in &edges {
            if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::invalid(
                    "bin edges must be strictly increasing with at least one bin",
                ));
            }
        }
        Ok(HistogramGrid { edges })
    }

    pub fn dims(&self) -> usize {
        self.edges.len()
    }

    pub fn bins(&self, dim: usize) -> usize {
        self.edges[dim].len() - 1
    }

    pub fn edges(&self, dim: usize) -> &[f64] {
        &self.edges[dim]
    }

    pub fn bin(&self, dim: usize, x: f64) -> usize {
        let e = &self.edges[dim];
        let last = e.len() - 2;
        // First edge strictly greater than x, minus one.
        let k = e.partition_point(|edge| *edge <= x);
        k.saturating_sub(1).min(last)
    }

    /// Normalized histogram of dimension `dim`.
    pub fn histogram<R: AsRef<[f64]>>(&self, dim: usize, samples: &[R]) -> Vec<f64> {
        let mut counts = alloc::vec![0.0; self.bins(dim)];
        for s in samples {
            counts[self.bin(dim, s.as_ref()[dim])] += 1.0;
        }
        let n = samples.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * log2(pi / mi))
        .sum()
}

/// `0.5 KL(P || M) + 0.5 KL(Q || M)` in bits with `M = (P + Q) / 2`.
pub fn js_from_probs(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::invalid(
            "distributions must be nonempty and equally long",
        ));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_to_mixture(p, &m) + 0.5 * kl_to_mixture(q, &m);
    Ok(js.clamp(0.0, 1.0))
}

/// Mean over dimensions of the histogram divergence on `grid`.
pub fn js_divergence<R: AsRef<[f64]>>(p: &[R], q: &[R], grid: &HistogramGrid) -> Result<f64> {
    let dim = check_sets(p, q)?;
    if dim != grid.dims() {
        return Err(Error::invalid(
            "grid dimensionality differs from the samples",
        ));
    }
    let mut total = 0.0;
    for j in 0..dim {
        total += js_from_probs(&grid.histogram(j, p), &grid.histogram(j, q))?;
    }
    Ok(total / dim as f64)
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// `n` rows of `set` taken at evenly spaced positions, with a seeded offset,
/// along its canonical (sorted) order. The choice ignores the input order,
/// and a set made of whole copies of another reduces to that set.
fn canonical_subsample<R: AsRef<[f64]>>(set: &[R], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut sorted: Vec<&[f64]> = set.iter().map(|v| v.as_ref()).collect();
    sorted.sort_by(|a, b| lexicographic(a, b));
    if n >= sorted.len() {
        return sorted.into_iter().map(|v| v.to_vec()).collect();
    }
    let offset: f64 = stream(seed, Stream::Eval).random();
    let stride = sorted.len() as f64 / n as f64;
    (0..n)
        .map(|i| sorted[(((i as f64 + offset) * stride) as usize).min(sorted.len() - 1)].to_vec())
        .collect()
}

/// Divergence after subsampling the larger set to the size of the smaller,
/// on a grid fitted to the result.
pub fn balanced_js<R: AsRef<[f64]>>(p: &[R], q: &[R], bins: usize, seed: u64) -> Result<f64> {
    js_at_size(p, q, p.len().min(q.len()), bins, seed)
}

/// Divergence with both sets subsampled to at most `n` rows. Histogram
/// estimates are biased upward at small sizes, so values are comparable
/// only at a common `n`.
pub fn js_at_size<R: AsRef<[f64]>>(
    p: &[R],
    q: &[R],
    n: usize,
    bins: usize,
    seed: u64,
) -> Result<f64> {
    check_sets(p, q)?;
    if n == 0 {
        return Err(Error::invalid("subsample size must be positive"));
    }
    let ps = canonical_subsample(p, n, seed);
    let qs = canonical_subsample(q, n, seed);
    let grid = HistogramGrid::fit(&ps, &qs, bins)?;
    js_divergence(&ps, &qs, &grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    State,
    Action,
    Transition,
}

impl Quantity {
    pub const ALL: [Quantity; 3] = [Quantity::State, Quantity::Action, Quantity::Transition];

    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::State => "state",
            Quantity::Action => "action",
            Quantity::Transition => "transition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pair {
    OffVsOn,
    SynOnVsOn,
    SynOffVsOn,
    SynAllVsOn,
}

impl Pair {
    pub const ALL: [Pair; 4] = [
        Pair::OffVsOn,
        Pair::SynOnVsOn,
        Pair::SynOffVsOn,
        Pair::SynAllVsOn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Pair::OffVsOn => "off_vs_on",
            Pair::SynOnVsOn => "syn_on_vs_on",
            Pair::SynOffVsOn => "syn_off_vs_on",
            Pair::SynAllVsOn => "syn_all_vs_on",
        }
    }

    fn sources(self) -> &'static [Source] {
        match self {
            Pair::OffVsOn => &[Source::Offline],
            Pair::SynOnVsOn => &[Source::SynOnline],
            Pair::SynOffVsOn => &[Source::SynOffline],
            Pair::SynAllVsOn => &[Source::SynOnline, Source::SynOffline],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEntry {
    pub quantity: Quantity,
    pub pair: Pair,
    pub value: f64,
}

fn vectors(
    buffers: &BufferSet,
    sources: &[Source],
    quantity: Quantity,
    codec: &TransitionCodec,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for &s in sources {
        for t in buffers.get(s).transitions() {
            out.push(match quantity {
                Quantity::State => t.state.clone(),
                Quantity::Action => t.action.clone(),
                Quantity::Transition => codec.encode(t)?,
            });
        }
    }
    Ok(out)
}

/// Divergence of each buffer (or the pooled synthetic buffers) from
/// `d_on`. Every entry uses the same subsample size, the smallest of the
/// sets involved, so entries can be compared with each other. Pairs whose
/// buffers are all empty, such as the offline synthetic buffer when no
/// offline samples are generated, are left out.
pub fn divergence_report(
    buffers: &BufferSet,
    codec: &TransitionCodec,
    bins: usize,
    seed: u64,
) -> Result<Vec<DivergenceEntry>> {
    if buffers.d_on.is_empty() {
        return Err(Error::Composition {
            buffer: Source::Online.as_str(),
        });
    }
    if buffers.d_off.is_empty() {
        return Err(Error::Composition {
            buffer: Source::Offline.as_str(),
        });
    }
    let n = Pair::ALL
        .iter()
        .map(|p| {
            p.sources()
                .iter()
                .map(|&s| buffers.get(s).len())
                .sum::<usize>()
        })
        .filter(|&len| len > 0)
        .fold(buffers.d_on.len(), usize::min);
    let mut out = Vec::new();
    for quantity in Quantity::ALL {
        let on = vectors(buffers, &[Source::Online], quantity, codec)?;
        for pair in Pair::ALL {
            let other = vectors(buffers, pair.sources(), quantity, codec)?;
            if other.is_empty() {
                continue;
            }
            out.push(DivergenceEntry {
                quantity,
                pair,
                value: js_at_size(&other, &on, n, bins, seed)?,
            });
        }
    }
    Ok(out)
}

/// Pointwise summary of several runs at one evaluation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub step: u64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

/// Mean and population std across runs that share the same steps.
pub fn aggregate_curves(runs: &[Vec<(u64, f64)>]) -> Result<Vec<AggregatePoint>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::invalid("no runs to aggregate"))?;
    for run in runs {
        if run.len() != first.len() || run.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(Error::invalid("runs have different evaluation cadences"));
        }
    }
    let n = runs.len() as f64;
    Ok((0..first.len())
        .map(|k| {
            let mean = runs.iter().map(|r| r[k].1).sum::<f64>() / n;
            let var = runs
                .iter()
                .map(|r| (r[k].1 - mean) * (r[k].1 - mean))
                .sum::<f64>()
                / n;
            AggregatePoint {
                step: first[k].0,
                mean,
                std: sqrt(var),
                n: runs.len(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn discrete_case() {
        let js = js_from_probs(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((js - 0.311_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn grid_boundaries() {
        let g = HistogramGrid::from_edges(vec![vec![0.0, 1.0, 2.0]]).unwrap();
        assert_eq!(g.bin(0, 0.0), 0);
        assert_eq!(g.bin(0, 1.0), 1);
        assert_eq!(g.bin(0, 2.0), 1);
        assert_eq!(g.bin(0, -5.0), 0);
        assert_eq!(g.bin(0, 7.0), 1);
        assert!(HistogramGrid::from_edges(vec![vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn aggregate_arithmetic() {
        let a =
            aggregate_curves(&[vec![(0, 10.0), (5, 10.0)], vec![(0, 20.0), (5, 20.0)]]).unwrap();
        assert_eq!(a[0].mean, 15.0);
        assert_eq!(a[0].std, 5.0);
        assert!(aggregate_curves(&[vec![(0, 1.0)], vec![(1, 1.0)]]).is_err());
    }
}
