//! Piecewise-constant power spectral densities on a two-sided DFT grid and
//! the subband partition derived from them.
//!
//! Bin `k` of a grid of length `T` stands for the normalized frequency `k/T`
//! cycles per sample. Bins above `T/2` are the negative frequencies, so the
//! mirror of bin `k` is `(T - k) mod T`. Supports are measured by counting
//! bins.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T`-point two-sided frequency grid. `T` is even and at least 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FrequencyGrid(usize);

impl FrequencyGrid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 4 || !len.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "length must be even and at least 4, got {len}"
            )));
        }
        Ok(FrequencyGrid(len))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0
    }

    #[inline]
    pub fn nyquist(&self) -> usize {
        self.0 / 2
    }

    /// Bin carrying the conjugate of bin `k`.
    #[inline]
    pub fn mirror(&self, k: usize) -> usize {
        (self.0 - k % self.0) % self.0
    }

    fn check_range(&self, lo: usize, hi: usize) -> Result<()> {
        if lo >= hi || hi > self.0 {
            return Err(Error::RangeOutOfGrid {
                lo,
                hi,
                len: self.0,
            });
        }
        Ok(())
    }
}

impl TryFrom<usize> for FrequencyGrid {
    type Error = Error;

    fn try_from(len: usize) -> Result<Self> {
        FrequencyGrid::new(len)
    }
}

impl From<FrequencyGrid> for usize {
    fn from(grid: FrequencyGrid) -> usize {
        grid.0
    }
}

/// A rectangular block of constant power over the bins `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub lo: usize,
    pub hi: usize,
    pub level: f64,
}

impl Block {
    pub fn new(lo: usize, hi: usize, level: f64) -> Self {
        Block { lo, hi, level }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, k: usize) -> bool {
        self.lo <= k && k < self.hi
    }
}

/// Prescribed PSD of one latent source: disjoint blocks of strictly positive
/// power, conjugate symmetric, zero everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdSpec {
    grid: FrequencyGrid,
    blocks: Vec<Block>,
}

impl PsdSpec {
    /// Validates a full two-sided block list. Mirrors must be listed
    /// explicitly; see [`PsdSpec::from_positive_blocks`] for the one-sided
    /// form.
    pub fn new(grid: FrequencyGrid, blocks: impl IntoIterator<Item = Block>) -> Result<Self> {
        let mut blocks: Vec<Block> = blocks.into_iter().collect();
        for b in &blocks {
            grid.check_range(b.lo, b.hi)?;
            if !(b.level > 0.0 && b.level.is_finite()) {
                return Err(Error::ZeroLevel {
                    lo: b.lo,
                    hi: b.hi,
                    level: b.level,
                });
            }
        }
        blocks.sort_by_key(|b| b.lo);
        for pair in blocks.windows(2) {
            if pair[1].lo < pair[0].hi {
                return Err(Error::OverlappingBlocks { bin: pair[1].lo });
            }
        }
        let spec = PsdSpec { grid, blocks };
        let dense = spec.dense();
        for k in 0..grid.len() {
            let m = grid.mirror(k);
            if dense[k] != dense[m] {
                return Err(Error::AsymmetricSpectrum { bin: k, mirror: m });
            }
        }
        Ok(spec)
    }

    /// Builds a spec from blocks on the non-negative half `[0, T/2]`, adding
    /// the mirrored negative-frequency blocks.
    pub fn from_positive_blocks(
        grid: FrequencyGrid,
        positive: impl IntoIterator<Item = Block>,
    ) -> Result<Self> {
        let t = grid.len();
        let half = grid.nyquist();
        let mut blocks = Vec::new();
        for b in positive {
            if b.lo >= b.hi || b.hi > half + 1 {
                return Err(Error::RangeOutOfGrid {
                    lo: b.lo,
                    hi: b.hi,
                    len: half + 1,
                });
            }
            // Strictly negative-frequency bins that mirror this block.
            let first = b.lo.max(1);
            let last = (b.hi - 1).min(half - 1);
            let mirror = (first <= last).then(|| (t - last, t - first + 1));
            match mirror {
                // A block reaching the Nyquist bin is contiguous with its mirror.
                Some((mlo, mhi)) if b.hi == half + 1 => {
                    blocks.push(Block::new(b.lo, mhi, b.level));
                    debug_assert_eq!(mlo, half + 1);
                }
                Some((mlo, mhi)) => {
                    blocks.push(b);
                    blocks.push(Block::new(mlo, mhi, b.level));
                }
                None => blocks.push(b),
            }
        }
        PsdSpec::new(grid, blocks)
    }

    pub fn grid(&self) -> FrequencyGrid {
        self.grid
    }

    /// Blocks sorted by starting bin.
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Blocks clipped to the non-negative half `[0, T/2]`.
    pub fn positive_blocks(&self) -> Vec<Block> {
        let end = self.grid.nyquist() + 1;
        self.blocks
            .iter()
            .filter(|b| b.lo < end)
            .map(|b| Block::new(b.lo, b.hi.min(end), b.level))
            .collect()
    }

    pub fn level(&self, k: usize) -> f64 {
        self.blocks
            .iter()
            .find(|b| b.contains(k))
            .map_or(0.0, |b| b.level)
    }

    /// PSD value on every bin.
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.len()];
        for b in &self.blocks {
            out[b.lo..b.hi].fill(b.level);
        }
        out
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(|b| b.lo..b.hi)
    }

    /// Number of bins with nonzero power.
    pub fn support_size(&self) -> usize {
        self.blocks.iter().map(Block::width).sum()
    }

    /// Average power per sample, `(1/T)·Σ_k S(k)`.
    pub fn mean_power(&self) -> f64 {
        let total: f64 = self.blocks.iter().map(|b| b.level * b.width() as f64).sum();
        total / self.grid.len() as f64
    }
}

#[derive(Serialize, Deserialize)]
struct PsdDocument {
    #[serde(rename = "T")]
    len: usize,
    blocks: Vec<Block>,
}

impl Serialize for PsdSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PsdDocument {
            len: self.grid.len(),
            blocks: self.positive_blocks(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PsdSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = PsdDocument::deserialize(d)?;
        let grid = FrequencyGrid::new(doc.len).map_err(serde::de::Error::custom)?;
        PsdSpec::from_positive_blocks(grid, doc.blocks).map_err(serde::de::Error::custom)
    }
}

/// Knobs for [`random_psd_spec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomPsdParams {
    pub max_blocks: usize,
    pub level_range: (f64, f64),
    pub width_range: (usize, usize),
}

impl Default for RandomPsdParams {
    fn default() -> Self {
        RandomPsdParams {
            max_blocks: 3,
            level_range: (0.5, 2.0),
            width_range: (4, 32),
        }
    }
}

const PLACEMENT_RETRIES: usize = 1000;

/// Draws between 1 and `max_blocks` non-overlapping blocks uniformly on the
/// strictly positive frequencies `[1, T/2)` and mirrors them.
pub fn random_psd_spec(
    grid: FrequencyGrid,
    seed: u64,
    params: &RandomPsdParams,
) -> Result<PsdSpec> {
    let (wmin, wmax) = params.width_range;
    let (lmin, lmax) = params.level_range;
    if params.max_blocks == 0 || wmin == 0 || wmin > wmax {
        return Err(Error::DomainError(format!(
            "need max_blocks >= 1 and 1 <= width_min <= width_max, got {params:?}"
        )));
    }
    if !(lmin > 0.0 && lmin <= lmax && lmax.is_finite()) {
        return Err(Error::DomainError(format!(
            "level range must satisfy 0 < min <= max, got ({lmin}, {lmax})"
        )));
    }
    let available = grid.nyquist() - 1;
    if params.max_blocks * wmax > available {
        return Err(Error::InfeasiblePlacement(format!(
            "{} blocks of width up to {wmax} need {} bins, only {available} positive bins exist",
            params.max_blocks,
            params.max_blocks * wmax
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.random_range(1..=params.max_blocks);
    let mut placed: Vec<Block> = Vec::with_capacity(count);
    let mut attempts = 0;
    while placed.len() < count {
        let width = rng.random_range(wmin..=wmax);
        let level = if lmin == lmax {
            lmin
        } else {
            rng.random_range(lmin..lmax)
        };
        let lo = rng.random_range(1..=grid.nyquist() - width);
        let candidate = Block::new(lo, lo + width, level);
        if placed
            .iter()
            .all(|b| candidate.hi <= b.lo || b.hi <= candidate.lo)
        {
            placed.push(candidate);
        } else {
            attempts += 1;
            if attempts > PLACEMENT_RETRIES {
                return Err(Error::InfeasiblePlacement(format!(
                    "no room for block {} of {count} after {PLACEMENT_RETRIES} retries",
                    placed.len() + 1
                )));
            }
        }
    }
    PsdSpec::from_positive_blocks(grid, placed)
}

/// One interval of the partition with the sources active on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subband {
    pub lo: usize,
    pub hi: usize,
    /// Indices (into the spec list) of sources with nonzero PSD here.
    pub active: Vec<usize>,
}

impl Subband {
    #[inline]
    pub fn width(&self) -> usize {
        self.hi - self.lo
    }

    /// Center frequency in bins.
    pub fn center(&self) -> f64 {
        (self.lo + self.hi) as f64 / 2.0
    }

    pub fn contains(&self, k: usize) -> bool {
        self.lo <= k && k < self.hi
    }

    /// Samples this subband costs: one per bin per active source.
    pub fn sample_count(&self) -> usize {
        self.width() * self.active.len()
    }
}

/// Partition of the union of all supports into subbands on which every
/// source is either fully active or fully silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandPlan {
    pub grid: FrequencyGrid,
    pub sources: usize,
    pub subbands: Vec<Subband>,
}

impl SubbandPlan {
    pub fn len(&self) -> usize {
        self.subbands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subbands.is_empty()
    }

    /// `Σ_l W^l·|Γ^l|`.
    pub fn total_samples(&self) -> usize {
        self.subbands.iter().map(Subband::sample_count).sum()
    }

    /// Subband boundaries `f^0 < f^1 < …` including interior gaps.
    pub fn boundaries(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.subbands.iter().flat_map(|s| [s.lo, s.hi]).collect();
        set.into_iter().collect()
    }
}

fn shared_grid(specs: &[PsdSpec]) -> Result<Option<FrequencyGrid>> {
    let Some(first) = specs.first() else {
        return Ok(None);
    };
    let grid = first.grid();
    for s in specs {
        if s.grid() != grid {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: s.grid().len(),
            });
        }
    }
    Ok(Some(grid))
}

/// Splits the frequency axis at every block edge of every source and keeps
/// the intervals on which at least one source is active.
pub fn partition_subbands(specs: &[PsdSpec]) -> Result<SubbandPlan> {
    let grid = shared_grid(specs)?
        .ok_or_else(|| Error::DomainError("cannot partition an empty set of specs".into()))?;
    let edges: BTreeSet<usize> = specs
        .iter()
        .flat_map(|s| s.blocks().iter().flat_map(|b| [b.lo, b.hi]))
        .collect();
    let edges: Vec<usize> = edges.into_iter().collect();
    let subbands = edges
        .windows(2)
        .filter_map(|w| {
            let active: Vec<usize> = specs
                .iter()
                .enumerate()
                .filter(|(_, s)| s.level(w[0]) > 0.0)
                .map(|(m, _)| m)
                .collect();
            (!active.is_empty()).then(|| Subband {
                lo: w[0],
                hi: w[1],
                active,
            })
        })
        .collect();
    Ok(SubbandPlan {
        grid,
        sources: specs.len(),
        subbands,
    })
}

/// Total bandwidth `B = Σ_m |support(m)|` in bins.
pub fn total_bandwidth(specs: &[PsdSpec]) -> Result<usize> {
    shared_grid(specs)?;
    Ok(specs.iter().map(PsdSpec::support_size).sum())
}
