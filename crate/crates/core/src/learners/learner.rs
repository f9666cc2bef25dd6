use alloc::vec::Vec;

use crate::nets::{polyak_update, Agent, Binding, Params};
use crate::numerics::{Adam, AdamConfig, Grads, Real, Tape, Tensor, Var};
use crate::replay::{PoolSet, Sampler};
use crate::rng::{derive_seed, rng_from, Rng};
use crate::Result;

use super::losses::{actor_loss_on_feature, critic_loss, AgentVars};
use super::{rho, AnchorCache, AnchorTargets, Batch, LearnerConfig};

const NOISE_STREAM: u64 = 0x004E_015E;

/// Scalar diagnostics from one learner step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub bellman: f64,
    pub feat: f64,
    pub sac: f64,
    pub anchor: f64,
    pub q_mean: f64,
    pub log_prob_mean: f64,
}

/// Agent plus the two optimizer groups: {encoder, critics} and {actor}.
/// Targets have no optimizer state; only Polyak averaging moves them.
pub struct Learner<T: Real> {
    agent: Agent<T>,
    cfg: LearnerConfig,
    critic_opt: Adam<T>,
    actor_opt: Adam<T>,
    rng: Rng,
    updates: u64,
}

fn critic_group<T: Real>(agent: &Agent<T>) -> Vec<(alloc::string::String, &Tensor<T>)> {
    let mut v = agent.encoder.named("encoder");
    v.extend(agent.critics[0].named("critic1"));
    v.extend(agent.critics[1].named("critic2"));
    v
}

fn critic_group_mut<T: Real>(agent: &mut Agent<T>) -> Vec<&mut Tensor<T>> {
    let mut v = agent.encoder.tensors_mut();
    let [c1, c2] = &mut agent.critics;
    v.extend(c1.tensors_mut());
    v.extend(c2.tensors_mut());
    v
}

fn collect<T: Real>(
    grads: &Grads<T>,
    tape: &Tape<'_, T>,
    leaves: impl IntoIterator<Item = Var>,
) -> Vec<Tensor<T>> {
    leaves
        .into_iter()
        .map(|v| grads.get_or_zeros(tape, v))
        .collect()
}

impl<T: Real> Learner<T> {
    pub fn new(agent: Agent<T>, cfg: LearnerConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamConfig::with_lr(cfg.lr);
        let critic_opt = Adam::new(adam, critic_group(&agent));
        let actor_opt = Adam::new(adam, agent.actor.named("actor"));
        Ok(Self {
            agent,
            cfg,
            critic_opt,
            actor_opt,
            rng: rng_from(derive_seed(cfg.seed, NOISE_STREAM)),
            updates: 0,
        })
    }

    pub fn agent(&self) -> &Agent<T> {
        &self.agent
    }

    pub fn into_agent(self) -> Agent<T> {
        self.agent
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.cfg
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Sample, then critic → actor → Polyak. `t` indexes the anchor
    /// schedule; `anchor` is `None` for source training.
    pub fn step(
        &mut self,
        pools: &PoolSet,
        sampler: &mut dyn Sampler,
        anchor: Option<&AnchorCache<T>>,
        t: u64,
    ) -> Result<StepStats> {
        let mb = sampler.sample(pools)?;
        let batch = Batch::from_minibatch(&mb, &mut self.rng)?;
        let (targets, weight) = match anchor {
            Some(cache) if self.cfg.anchor_head.anchored() => (
                Some(cache.gather(&mb)?),
                rho(t, self.cfg.horizon, self.cfg.rho_end)?,
            ),
            _ => (None, 1.0),
        };
        self.update(&batch, targets.as_ref(), weight)
    }

    /// One update on a prepared batch.
    pub fn update(
        &mut self,
        batch: &Batch<T>,
        anchor: Option<&AnchorTargets<T>>,
        rho: f64,
    ) -> Result<StepStats> {
        let mut stats = StepStats::default();
        let cfg = self.cfg;

        // The actor reuses this pre-update feature, read-only.
        let (critic_grads, feature) = {
            let mut tape = Tape::new();
            let vars = AgentVars::bind(
                &mut tape,
                &self.agent,
                [
                    Binding::Trainable,
                    Binding::Constant,
                    Binding::Trainable,
                    Binding::Constant,
                ],
            )?;
            let terms = critic_loss(&mut tape, &vars, anchor, batch, &cfg, rho)?;
            stats.bellman = tape.value(terms.bellman).item().as_f64();
            stats.feat = terms.feat.map_or(0.0, |v| tape.value(v).item().as_f64());
            stats.q_mean = tape.value(terms.q[0]).sum().as_f64() / batch.len() as f64;
            let grads = tape.backward(terms.total)?;
            let leaves = vars
                .encoder
                .leaves()
                .into_iter()
                .chain(vars.critics[0].leaves())
                .chain(vars.critics[1].leaves());
            (
                collect(&grads, &tape, leaves),
                tape.value(terms.feature).clone(),
            )
        };
        self.critic_opt
            .step(&mut critic_group_mut(&mut self.agent), &critic_grads)?;

        let actor_grads = {
            let mut tape = Tape::new();
            let vars = AgentVars::bind(
                &mut tape,
                &self.agent,
                [
                    Binding::Constant,
                    Binding::Trainable,
                    Binding::Constant,
                    Binding::Constant,
                ],
            )?;
            let feature = tape.constant(feature)?;
            let terms = actor_loss_on_feature(&mut tape, &vars, feature, anchor, batch, &cfg, rho)?;
            stats.sac = tape.value(terms.sac).item().as_f64();
            stats.anchor = terms.anchor.map_or(0.0, |v| tape.value(v).item().as_f64());
            stats.log_prob_mean = tape.value(terms.log_prob).sum().as_f64() / batch.len() as f64;
            let grads = tape.backward(terms.total)?;
            collect(&grads, &tape, vars.actor.leaves())
        };
        self.actor_opt
            .step(&mut self.agent.actor.tensors_mut(), &actor_grads)?;

        let Agent {
            critics, targets, ..
        } = &mut self.agent;
        for (target, online) in targets.iter_mut().zip(critics.iter()) {
            polyak_update(target, online, cfg.tau)?;
        }
        self.updates += 1;
        Ok(stats)
    }
}

/// One learner step; see [`Learner::step`].
pub fn learner_step<T: Real>(
    learner: &mut Learner<T>,
    pools: &PoolSet,
    sampler: &mut dyn Sampler,
    anchor: Option<&AnchorCache<T>>,
    t: u64,
) -> Result<StepStats> {
    learner.step(pools, sampler, anchor, t)
}
