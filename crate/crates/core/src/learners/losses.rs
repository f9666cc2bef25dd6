use crate::nets::{
    kl_diag_gauss_on_tape, sample_squashed_on_tape, ActorVars, Agent, Binding, CriticVars,
    EncoderVars,
};
use crate::numerics::{Real, Tape, Var};
use crate::Result;

use super::{AnchorHead, AnchorTargets, Batch, LearnerConfig};

/// An agent's tensors registered on one tape.
#[derive(Clone, Debug)]
pub struct AgentVars {
    pub encoder: EncoderVars,
    pub actor: ActorVars,
    pub critics: [CriticVars; 2],
    pub targets: [CriticVars; 2],
}

impl AgentVars {
    /// Bindings for encoder, actor, critics and targets, in that order.
    pub fn bind<'a, T: Real>(
        tape: &mut Tape<'a, T>,
        agent: &'a Agent<T>,
        bindings: [Binding; 4],
    ) -> Result<Self> {
        let [enc, act, crit, targ] = bindings;
        Ok(Self {
            encoder: agent.encoder.bind(tape, enc)?,
            actor: agent.actor.bind(tape, act)?,
            critics: [
                agent.critics[0].bind(tape, crit)?,
                agent.critics[1].bind(tape, crit)?,
            ],
            targets: [
                agent.targets[0].bind(tape, targ)?,
                agent.targets[1].bind(tape, targ)?,
            ],
        })
    }

    pub fn all_trainable<'a, T: Real>(tape: &mut Tape<'a, T>, agent: &'a Agent<T>) -> Result<Self> {
        Self::bind(tape, agent, [Binding::Trainable; 4])
    }
}

/// `sg(r + γ(1−d)·[min_i Q̄_i(s′, a′) − η log π(a′|s′)])`, `[B, 1]`.
pub fn bellman_target<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &AgentVars,
    batch: &Batch<T>,
    cfg: &LearnerConfig,
) -> Result<Var> {
    let next_obs = tape.constant(batch.next_obs.clone())?;
    let feat = vars.encoder.forward(tape, next_obs)?;
    let (mean, log_std) = vars.actor.forward(tape, feat)?;
    let (next_action, log_prob) = sample_squashed_on_tape(tape, mean, log_std, &batch.next_noise)?;
    let q1 = vars.targets[0].forward(tape, feat, next_action)?;
    let q2 = vars.targets[1].forward(tape, feat, next_action)?;
    let q = tape.min(q1, q2)?;
    let bonus = tape.scale(log_prob, T::of(-cfg.eta))?;
    let soft = tape.add(q, bonus)?;
    let gamma = T::of(cfg.gamma);
    let discount = tape.constant(batch.not_done.map(|nd| gamma * nd))?;
    let discounted = tape.mul(discount, soft)?;
    let rewards = tape.constant(batch.rewards.clone())?;
    let y = tape.add(rewards, discounted)?;
    Ok(tape.stop_gradient(y))
}

#[derive(Clone, Copy, Debug)]
pub struct CriticTerms {
    pub total: Var,
    pub bellman: Var,
    pub feat: Option<Var>,
    /// Online-encoder feature of `batch.obs`, `[B, F]`.
    pub feature: Var,
    pub q: [Var; 2],
}

/// `Σ_i mean_B (Q_i − sg(y))²  +  λ_feat·ρ·mean_{B_D} ‖φ(o) − φ₀(o)‖²`.
///
/// The feature anchor is skipped when `anchor` is `None` or the head is
/// [`AnchorHead::None`].
pub fn critic_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &AgentVars,
    anchor: Option<&AnchorTargets<T>>,
    batch: &Batch<T>,
    cfg: &LearnerConfig,
    rho: f64,
) -> Result<CriticTerms> {
    let y = bellman_target(tape, vars, batch, cfg)?;
    let obs = tape.constant(batch.obs.clone())?;
    let feature = vars.encoder.forward(tape, obs)?;
    let actions = tape.constant(batch.actions.clone())?;
    let mut q = [y; 2];
    let mut bellman = None;
    for (i, critic) in vars.critics.iter().enumerate() {
        q[i] = critic.forward(tape, feature, actions)?;
        let err = tape.sub(q[i], y)?;
        let sq = tape.square(err)?;
        let term = tape.mean(sq)?;
        bellman = Some(match bellman {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let bellman = bellman.expect("two critics");
    let mut total = bellman;
    let mut feat = None;
    if let (Some(a), true) = (anchor, cfg.anchor_head.anchored()) {
        let target = tape.constant(a.feature.clone())?;
        let per_row = masked_sq_distance(tape, feature, target, batch)?;
        let l = anchor_mean(tape, per_row, batch, cfg.lambda_feat * rho)?;
        total = tape.add(total, l)?;
        feat = Some(l);
    }
    Ok(CriticTerms {
        total,
        bellman,
        feat,
        feature,
        q,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ActorTerms {
    pub total: Var,
    pub sac: Var,
    pub anchor: Option<Var>,
    pub log_prob: Var,
}

/// `mean_B[η log π(a|s) − min_i Q_i(s, a)]` plus the configured anchor head
/// on B_D. The encoder feature and the critics enter read-only.
pub fn actor_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &AgentVars,
    anchor: Option<&AnchorTargets<T>>,
    batch: &Batch<T>,
    cfg: &LearnerConfig,
    rho: f64,
) -> Result<ActorTerms> {
    let obs = tape.constant(batch.obs.clone())?;
    let raw_feature = vars.encoder.forward(tape, obs)?;
    let feature = tape.stop_gradient(raw_feature);
    actor_loss_on_feature(tape, vars, feature, anchor, batch, cfg, rho)
}

/// [`actor_loss`] given an already-computed (detached) feature.
pub(crate) fn actor_loss_on_feature<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &AgentVars,
    feature: Var,
    anchor: Option<&AnchorTargets<T>>,
    batch: &Batch<T>,
    cfg: &LearnerConfig,
    rho: f64,
) -> Result<ActorTerms> {
    let (mean, log_std) = vars.actor.forward(tape, feature)?;
    let (action, log_prob) = sample_squashed_on_tape(tape, mean, log_std, &batch.noise)?;
    let critics = [vars.critics[0].detach(tape), vars.critics[1].detach(tape)];
    let q1 = critics[0].forward(tape, feature, action)?;
    let q2 = critics[1].forward(tape, feature, action)?;
    let q = tape.min(q1, q2)?;
    let ent = tape.scale(log_prob, T::of(cfg.eta))?;
    let per_row = tape.sub(ent, q)?;
    let sac = tape.mean(per_row)?;
    let mut total = sac;
    let mut anchor_term = None;
    if let Some(a) = anchor {
        let per_row = match cfg.anchor_head {
            AnchorHead::Mse => {
                let target = tape.constant(a.mean.clone())?;
                Some(masked_sq_distance(tape, mean, target, batch)?)
            }
            AnchorHead::Kl => {
                let kl = kl_diag_gauss_on_tape(tape, &a.mean, &a.log_std, mean, log_std)?;
                let mask = tape.constant(batch.anchor_mask.clone())?;
                Some(tape.mul(kl, mask)?)
            }
            AnchorHead::None => None,
        };
        if let Some(per_row) = per_row {
            let l = anchor_mean(tape, per_row, batch, cfg.beta_mse * rho)?;
            total = tape.add(total, l)?;
            anchor_term = Some(l);
        }
    }
    Ok(ActorTerms {
        total,
        sac,
        anchor: anchor_term,
        log_prob,
    })
}

/// `mask ⊙ ‖x − target‖²` per row, `[B, 1]`.
fn masked_sq_distance<T: Real>(
    tape: &mut Tape<'_, T>,
    x: Var,
    target: Var,
    batch: &Batch<T>,
) -> Result<Var> {
    let diff = tape.sub(x, target)?;
    let sq = tape.square(diff)?;
    let per_row = tape.row_sum(sq)?;
    let mask = tape.constant(batch.anchor_mask.clone())?;
    tape.mul(per_row, mask)
}

/// `weight · Σ rows / |B_D|`.
fn anchor_mean<T: Real>(
    tape: &mut Tape<'_, T>,
    masked: Var,
    batch: &Batch<T>,
    weight: f64,
) -> Result<Var> {
    let n = batch.anchor_rows().max(1);
    let s = tape.sum(masked)?;
    tape.scale(s, T::of(weight / n as f64))
}
