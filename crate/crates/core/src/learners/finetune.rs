use alloc::format;

use crate::nets::{Agent, FrozenAnchor};
use crate::numerics::Real;
use crate::replay::{IrrSampler, PoolSet};
use crate::rng::derive_seed;
use crate::{Error, Result};

use super::{AnchorCache, Learner, LearnerConfig, StepStats};

/// Checkpoint and θ₀-integrity period, in learner steps.
pub const CHECK_EVERY: u64 = 1_000;

pub struct FinetuneRun<T> {
    pub agent: Agent<T>,
    pub anchor_checksum: u64,
    /// Diagnostics of the first learner step, if any.
    pub first: Option<StepStats>,
    pub last: Option<StepStats>,
}

/// `cfg.horizon` learner-only steps from `source` with the IRR sampler and,
/// unless the head is `None`, both anchors toward a frozen copy of `source`.
///
/// `on_checkpoint` sees the agent at step 0 and every [`CHECK_EVERY`] steps.
pub fn finetune<T: Real>(
    source: &Agent<T>,
    pools: &PoolSet,
    cfg: &LearnerConfig,
    mut on_checkpoint: impl FnMut(u64, &Agent<T>) -> Result<()>,
) -> Result<FinetuneRun<T>> {
    cfg.validate()?;
    let anchor = FrozenAnchor::freeze(source);
    let cache = if cfg.anchor_head.anchored() {
        Some(AnchorCache::build(&anchor, pools)?)
    } else {
        None
    };
    let mut sampler = IrrSampler::new(cfg.batch, cfg.alpha, derive_seed(cfg.replay_seed, 0xF1_4E))?;
    let mut learner = Learner::new(source.clone(), *cfg)?;
    on_checkpoint(0, learner.agent())?;
    let (mut first, mut last) = (None, None);
    for t in 0..cfg.horizon {
        let stats = learner.step(pools, &mut sampler, cache.as_ref(), t)?;
        first.get_or_insert(stats);
        last = Some(stats);
        let done = t + 1;
        if (done % CHECK_EVERY == 0 || done == cfg.horizon) && !anchor.verify() {
            return Err(Error::Parameters(format!(
                "frozen anchor checksum changed by step {done}"
            )));
        }
        if done % CHECK_EVERY == 0 {
            on_checkpoint(done, learner.agent())?;
        }
    }
    Ok(FinetuneRun {
        agent: learner.into_agent(),
        anchor_checksum: anchor.checksum(),
        first,
        last,
    })
}
