use alloc::format;
use alloc::vec::Vec;

use crate::datasets::Transition;
use crate::litworld::ACTION_DIM;
use crate::nets::{write_obs_row, Binding, FrozenAnchor, OBS_DIM};
use crate::numerics::{Real, Tape, Tensor};
use crate::replay::{Minibatch, PoolId};
use crate::rng::{normal_tensor, Rng};
use crate::{Error, Result};

/// Minibatch as dense tensors, plus the noise both losses consume.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `[B, obs]`
    pub obs: Tensor<T>,
    pub next_obs: Tensor<T>,
    /// `[B, A]`
    pub actions: Tensor<T>,
    /// `[B, 1]`
    pub rewards: Tensor<T>,
    /// `1 − done`, `[B, 1]`
    pub not_done: Tensor<T>,
    /// 1 on the anchor rows B_D, else 0; `[B, 1]`
    pub anchor_mask: Tensor<T>,
    /// Standard-normal draws for a′ in the target, `[B, A]`
    pub next_noise: Tensor<T>,
    /// Standard-normal draws for the actor's reparameterized sample
    pub noise: Tensor<T>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn anchor_rows(&self) -> usize {
        self.anchor_mask
            .data()
            .iter()
            .filter(|&&m| m > T::zero())
            .count()
    }

    pub fn from_minibatch(mb: &Minibatch<'_>, rng: &mut Rng) -> Result<Self> {
        Self::from_transitions(&mb.transitions, mb.anchor_start, rng)
    }

    /// Rows from `anchor_start` on are the anchor sub-batch.
    pub fn from_transitions(
        ts: &[&Transition],
        anchor_start: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let b = ts.len();
        if b == 0 {
            return Err(Error::Shape {
                op: "batch",
                detail: "empty minibatch".into(),
            });
        }
        let mut obs = Vec::with_capacity(b * OBS_DIM);
        let mut next_obs = Vec::with_capacity(b * OBS_DIM);
        let mut actions = Vec::with_capacity(b * ACTION_DIM);
        for t in ts {
            if t.obs.image.len() + 2 != OBS_DIM || t.next_obs.image.len() + 2 != OBS_DIM {
                return Err(Error::Shape {
                    op: "batch",
                    detail: format!("episode {} step {}: image extents", t.episode, t.step),
                });
            }
            write_obs_row(&t.obs, &mut obs);
            write_obs_row(&t.next_obs, &mut next_obs);
            actions.extend(t.action.iter().map(|&a| T::of(a as f64)));
        }
        Ok(Self {
            obs: Tensor::new(&[b, OBS_DIM], obs)?,
            next_obs: Tensor::new(&[b, OBS_DIM], next_obs)?,
            actions: Tensor::new(&[b, ACTION_DIM], actions)?,
            rewards: Tensor::from_fn(&[b, 1], |i| T::of(ts[i].reward as f64)),
            not_done: Tensor::from_fn(&[b, 1], |i| if ts[i].done { T::zero() } else { T::one() }),
            anchor_mask: Tensor::from_fn(&[b, 1], |i| {
                if i >= anchor_start {
                    T::one()
                } else {
                    T::zero()
                }
            }),
            next_noise: normal_tensor(rng, b, ACTION_DIM),
            noise: normal_tensor(rng, b, ACTION_DIM),
        })
    }
}

/// θ₀ outputs per batch row: feature, pre-tanh mean, bounded log σ.
/// Only rows under the anchor mask are meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct AnchorTargets<T> {
    /// `[B, F]`
    pub feature: Tensor<T>,
    /// `[B, A]`
    pub mean: Tensor<T>,
    /// `[B, A]`
    pub log_std: Tensor<T>,
}

impl<T: Real> AnchorTargets<T> {
    /// Evaluate θ₀ on every row of `obs`.
    pub fn compute(anchor: &FrozenAnchor<T>, obs: &Tensor<T>) -> Result<Self> {
        let mut tape = Tape::new();
        let x = tape.constant_ref(obs)?;
        let enc = anchor.encoder().bind(&mut tape, Binding::Constant)?;
        let actor = anchor.actor().bind(&mut tape, Binding::Constant)?;
        let f = enc.forward(&mut tape, x)?;
        let (m, ls) = actor.forward(&mut tape, f)?;
        Ok(Self {
            feature: tape.value(f).clone(),
            mean: tape.value(m).clone(),
            log_std: tape.value(ls).clone(),
        })
    }
}

const CACHE_CHUNK: usize = 256;

/// θ₀ outputs precomputed for every transition in the anchor pools, so a
/// learner step gathers rows instead of re-running the frozen networks.
#[derive(Clone, Debug)]
pub struct AnchorCache<T> {
    pools: Vec<(PoolId, AnchorTargets<T>)>,
    feature_dim: usize,
    action_dim: usize,
}

impl<T: Real> AnchorCache<T> {
    pub fn build(anchor: &FrozenAnchor<T>, pools: &crate::replay::PoolSet) -> Result<Self> {
        let feature_dim = anchor.encoder().out.bias.len();
        let action_dim = anchor.actor().mean.bias.len();
        let mut out = Vec::new();
        for id in [PoolId::SourceDemo, PoolId::RelitDemo] {
            let ts = pools.pool(id);
            if ts.is_empty() {
                continue;
            }
            let mut feature = Vec::with_capacity(ts.len() * feature_dim);
            let mut mean = Vec::with_capacity(ts.len() * action_dim);
            let mut log_std = Vec::with_capacity(ts.len() * action_dim);
            for chunk in ts.chunks(CACHE_CHUNK) {
                let mut rows = Vec::with_capacity(chunk.len() * OBS_DIM);
                for t in chunk {
                    write_obs_row(&t.obs, &mut rows);
                }
                let obs = Tensor::new(&[chunk.len(), OBS_DIM], rows)?;
                let a = AnchorTargets::compute(anchor, &obs)?;
                feature.extend_from_slice(a.feature.data());
                mean.extend_from_slice(a.mean.data());
                log_std.extend_from_slice(a.log_std.data());
            }
            out.push((
                id,
                AnchorTargets {
                    feature: Tensor::new(&[ts.len(), feature_dim], feature)?,
                    mean: Tensor::new(&[ts.len(), action_dim], mean)?,
                    log_std: Tensor::new(&[ts.len(), action_dim], log_std)?,
                },
            ));
        }
        Ok(Self {
            pools: out,
            feature_dim,
            action_dim,
        })
    }

    /// Anchor targets aligned with `mb`; rows outside B_D are zero.
    pub fn gather(&self, mb: &Minibatch<'_>) -> Result<AnchorTargets<T>> {
        let b = mb.len();
        let (fd, ad) = (self.feature_dim, self.action_dim);
        let mut feature = Tensor::zeros(&[b, fd]);
        let mut mean = Tensor::zeros(&[b, ad]);
        let mut log_std = Tensor::zeros(&[b, ad]);
        for (row, draw) in mb.draws.iter().enumerate().skip(mb.anchor_start) {
            let (_, src) = self
                .pools
                .iter()
                .find(|(id, _)| *id == draw.pool)
                .ok_or_else(|| {
                    Error::InvalidTransition(format!(
                        "anchor row drawn from {:?}, which has no θ₀ cache",
                        draw.pool
                    ))
                })?;
            let i = draw.index;
            feature.data_mut()[row * fd..(row + 1) * fd].copy_from_slice(src.feature.row(i));
            mean.data_mut()[row * ad..(row + 1) * ad].copy_from_slice(src.mean.row(i));
            log_std.data_mut()[row * ad..(row + 1) * ad].copy_from_slice(src.log_std.row(i));
        }
        Ok(AnchorTargets {
            feature,
            mean,
            log_std,
        })
    }
}
