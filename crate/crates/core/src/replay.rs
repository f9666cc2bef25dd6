//! The four replay pools and the two minibatch samplers.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::datasets::{ActionSource, LightTag, TrajectoryDataset, Transition};
use crate::rng::{rng_from, Rng};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolId {
    /// R⁰
    SourceRl,
    /// D⁰
    SourceDemo,
    /// R^rel
    RelitRl,
    /// D^rel
    RelitDemo,
}

impl PoolId {
    pub const ALL: [PoolId; 4] = [
        PoolId::SourceRl,
        PoolId::SourceDemo,
        PoolId::RelitRl,
        PoolId::RelitDemo,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn rl(light: LightTag) -> Self {
        if light.is_source() {
            PoolId::SourceRl
        } else {
            PoolId::RelitRl
        }
    }

    pub fn demo(light: LightTag) -> Self {
        if light.is_source() {
            PoolId::SourceDemo
        } else {
            PoolId::RelitDemo
        }
    }
}

/// Home pool by light tag × action source.
pub fn route(t: &Transition) -> PoolId {
    match t.source {
        ActionSource::Policy => PoolId::rl(t.light),
        ActionSource::Expert => PoolId::demo(t.light),
    }
}

/// Pools that receive a transition from the live interaction stream: always
/// the RL pool for its light, and also the demo pool when the expert acted.
pub fn stream_targets(t: &Transition) -> (PoolId, Option<PoolId>) {
    let demo = (t.source == ActionSource::Expert).then(|| PoolId::demo(t.light));
    (PoolId::rl(t.light), demo)
}

#[derive(Clone, Debug, Default)]
pub struct PoolSet {
    pools: [Vec<Transition>; 4],
}

impl PoolSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Route a live-stream transition.
    pub fn push_stream(&mut self, t: Transition) {
        let (rl, demo) = stream_targets(&t);
        if let Some(d) = demo {
            self.pools[d.slot()].push(t.clone());
        }
        self.pools[rl.slot()].push(t);
    }

    /// Add to the RL pool matching the transition's light.
    pub fn push_rl(&mut self, t: Transition) {
        self.pools[PoolId::rl(t.light).slot()].push(t);
    }

    /// Add to the demo pool matching the transition's light. Only expert
    /// actions belong there.
    pub fn push_demo(&mut self, t: Transition) -> Result<()> {
        if t.source != ActionSource::Expert {
            return Err(Error::InvalidTransition(format!(
                "episode {} step {}: policy action offered to a demo pool",
                t.episode, t.step
            )));
        }
        self.pools[PoolId::demo(t.light).slot()].push(t);
        Ok(())
    }

    /// Fill from an RL-stream dataset and a demo dataset (either may mix
    /// source and relit records).
    pub fn from_datasets<'d>(
        rl: impl IntoIterator<Item = &'d TrajectoryDataset>,
        demo: impl IntoIterator<Item = &'d TrajectoryDataset>,
    ) -> Result<Self> {
        let mut set = Self::new();
        for ds in rl {
            for t in &ds.transitions {
                set.push_rl(t.clone());
            }
        }
        for ds in demo {
            for t in &ds.transitions {
                set.push_demo(t.clone())?;
            }
        }
        Ok(set)
    }

    pub fn pool(&self, id: PoolId) -> &[Transition] {
        &self.pools[id.slot()]
    }

    pub fn len(&self, id: PoolId) -> usize {
        self.pools[id.slot()].len()
    }

    pub fn total(&self) -> usize {
        self.pools.iter().map(Vec::len).sum()
    }
}

/// One stratum: a union of pools drawn from uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stratum {
    /// B_R in source training: R⁰.
    SourceRl,
    /// B_D in source training: D⁰.
    SourceDemo,
    /// Original-light part of the fine-tune RL half: R⁰.
    Original,
    /// Relit part of the fine-tune RL half: R^rel ∪ D^rel.
    Relit,
    /// Anchor half: D⁰ ∪ D^rel.
    Anchor,
}

impl Stratum {
    pub fn pools(self) -> &'static [PoolId] {
        match self {
            Stratum::SourceRl | Stratum::Original => &[PoolId::SourceRl],
            Stratum::SourceDemo => &[PoolId::SourceDemo],
            Stratum::Relit => &[PoolId::RelitRl, PoolId::RelitDemo],
            Stratum::Anchor => &[PoolId::SourceDemo, PoolId::RelitDemo],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stratum::SourceRl => "R0",
            Stratum::SourceDemo => "D0",
            Stratum::Original => "R0 (original light)",
            Stratum::Relit => "R_rel ∪ D_rel",
            Stratum::Anchor => "D0 ∪ D_rel",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Draw {
    pub pool: PoolId,
    pub index: usize,
}

/// A sampled minibatch. The first `anchor_start` rows are B_R; the rest are
/// B_D, the rows the anchor losses see.
#[derive(Clone, Debug)]
pub struct Minibatch<'a> {
    pub transitions: Vec<&'a Transition>,
    pub draws: Vec<Draw>,
    pub anchor_start: usize,
}

impl Minibatch<'_> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_anchor_row(&self, row: usize) -> bool {
        row >= self.anchor_start
    }

    pub fn count_from(&self, pool: PoolId) -> usize {
        self.draws.iter().filter(|d| d.pool == pool).count()
    }
}

pub trait Sampler {
    fn sample<'a>(&mut self, pools: &'a PoolSet) -> Result<Minibatch<'a>>;
}

fn draw_uniform<'a>(
    pools: &'a PoolSet,
    stratum: Stratum,
    n: usize,
    rng: &mut Rng,
    out: &mut Minibatch<'a>,
) -> Result<()> {
    if n == 0 {
        return Ok(());
    }
    let ids = stratum.pools();
    let total: usize = ids.iter().map(|&id| pools.len(id)).sum();
    if total == 0 {
        return Err(Error::EmptyPool {
            stratum: stratum.name(),
        });
    }
    for _ in 0..n {
        let mut j = rng.gen_range(0..total);
        for &id in ids {
            let len = pools.len(id);
            if j < len {
                out.transitions.push(&pools.pool(id)[j]);
                out.draws.push(Draw { pool: id, index: j });
                break;
            }
            j -= len;
        }
    }
    Ok(())
}

fn check_batch(batch: usize) -> Result<usize> {
    if batch < 2 || !batch.is_multiple_of(2) {
        return Err(Error::OutOfRange {
            what: "batch size (positive, even)",
            value: batch as f64,
        });
    }
    Ok(batch / 2)
}

/// Round half to even.
pub fn round_half_even(x: f64) -> usize {
    let fl = x.floor();
    let frac = x - fl;
    let up = if frac > 0.5 {
        true
    } else if frac < 0.5 {
        false
    } else {
        fl % 2.0 != 0.0
    };
    (fl + up as u8 as f64) as usize
}

/// `(n_orig, n_relit, n_anchor)` for a fine-tune minibatch.
pub fn irr_counts(batch: usize, alpha: f64) -> Result<(usize, usize, usize)> {
    let half = check_batch(batch)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::OutOfRange {
            what: "replay.alpha",
            value: alpha,
        });
    }
    let n_orig = round_half_even(alpha * half as f64).min(half);
    Ok((n_orig, half - n_orig, half))
}

/// Source-stage sampler: half from R⁰, half from D⁰.
pub struct RlpdSampler {
    half: usize,
    rng: Rng,
}

impl RlpdSampler {
    pub fn new(batch: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            half: check_batch(batch)?,
            rng: rng_from(seed),
        })
    }
}

impl Sampler for RlpdSampler {
    fn sample<'a>(&mut self, pools: &'a PoolSet) -> Result<Minibatch<'a>> {
        let mut mb = Minibatch {
            transitions: Vec::with_capacity(2 * self.half),
            draws: Vec::with_capacity(2 * self.half),
            anchor_start: self.half,
        };
        draw_uniform(pools, Stratum::SourceRl, self.half, &mut self.rng, &mut mb)?;
        draw_uniform(
            pools,
            Stratum::SourceDemo,
            self.half,
            &mut self.rng,
            &mut mb,
        )?;
        Ok(mb)
    }
}

/// Fine-tune sampler: the RL half mixes original-light R⁰ (fraction α) with
/// relit experience; the anchor half is drawn from D⁰ ∪ D^rel.
pub struct IrrSampler {
    counts: (usize, usize, usize),
    rng: Rng,
}

impl IrrSampler {
    pub fn new(batch: usize, alpha: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            counts: irr_counts(batch, alpha)?,
            rng: rng_from(seed),
        })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        self.counts
    }
}

impl Sampler for IrrSampler {
    fn sample<'a>(&mut self, pools: &'a PoolSet) -> Result<Minibatch<'a>> {
        let (n_orig, n_rel, n_anc) = self.counts;
        let b = n_orig + n_rel + n_anc;
        let mut mb = Minibatch {
            transitions: Vec::with_capacity(b),
            draws: Vec::with_capacity(b),
            anchor_start: n_orig + n_rel,
        };
        draw_uniform(pools, Stratum::Original, n_orig, &mut self.rng, &mut mb)?;
        draw_uniform(pools, Stratum::Relit, n_rel, &mut self.rng, &mut mb)?;
        draw_uniform(pools, Stratum::Anchor, n_anc, &mut self.rng, &mut mb)?;
        Ok(mb)
    }
}
