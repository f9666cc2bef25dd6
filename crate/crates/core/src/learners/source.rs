use alloc::vec::Vec;

use crate::datasets::{
    record_episode, ActionSource, Expert, LightTag, TrajectoryDataset, Transition,
};
use crate::eval::{evaluate, EvalSetup};
use crate::litworld::{EnvConfig, IlluminationConfig, LitWorld};
use crate::nets::{Agent, NetDims};
use crate::replay::{PoolSet, RlpdSampler};
use crate::rng::{derive_seed, rng_from};
use crate::Result;

use rand_distr::{Distribution, StandardNormal};

use super::{InterventionRule, Learner, LearnerConfig};

const AGENT_STREAM: u64 = 0x50_A6;
const DEMO_STREAM: u64 = 0x50_DE;
const EPISODE_STREAM: u64 = 0x50_E9;
const ACTION_STREAM: u64 = 0x50_AC;
const SELECT_STREAM: u64 = 0x50_5E;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceConfig {
    pub env: EnvConfig,
    pub light: IlluminationConfig,
    /// Environment steps of online interaction.
    pub budget: u64,
    /// Expert episodes recorded before interaction starts.
    pub demos: u32,
    pub eval_every: u64,
    pub eval_episodes: u32,
    /// Environment steps before the first learner step.
    pub learning_starts: u64,
    pub intervention: Option<InterventionRule>,
    pub learner: LearnerConfig,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            light: IlluminationConfig::source_default(),
            budget: 30_000,
            demos: 20,
            eval_every: 2_500,
            eval_episodes: 50,
            learning_starts: 256,
            intervention: Some(InterventionRule::default()),
            learner: LearnerConfig::default(),
            seed: 0,
        }
    }
}

pub struct SourceRun {
    /// Best checkpoint by source-light success; earlier step on ties.
    pub agent: Agent<f32>,
    pub best_step: u64,
    pub final_agent: Agent<f32>,
    /// `(env step, selection success rate)` per periodic evaluation.
    pub selection: Vec<(u64, f64)>,
    /// R⁰: every online transition, intervened steps included.
    pub rl: TrajectoryDataset,
    /// D⁰: seed demonstrations plus intervened steps.
    pub demos: TrajectoryDataset,
    pub episodes: u32,
    pub intervened_steps: u64,
}

/// Online SAC with RLPD sampling, one learner step per environment step,
/// and expert takeover when the policy stalls.
pub fn train_source(cfg: &SourceConfig, mut on_eval: impl FnMut(u64, f64)) -> Result<SourceRun> {
    cfg.env.validate()?;
    cfg.light.validate()?;
    let world = LitWorld::new(cfg.env, cfg.light);
    let setup = EvalSetup {
        env: cfg.env,
        source: cfg.light,
        deploy: cfg.light,
    };
    let agent = Agent::<f32>::new(NetDims::default(), derive_seed(cfg.seed, AGENT_STREAM));
    let learner_cfg = LearnerConfig {
        seed: derive_seed(cfg.seed, cfg.learner.seed),
        ..cfg.learner
    };
    let mut learner = Learner::new(agent, learner_cfg)?;
    let mut sampler = RlpdSampler::new(
        cfg.learner.batch,
        derive_seed(cfg.seed, cfg.learner.replay_seed),
    )?;
    let mut pools = PoolSet::new();
    let mut rl = TrajectoryDataset::new(cfg.light);
    let mut demos = TrajectoryDataset::new(cfg.light);

    for i in 0..cfg.demos {
        let mut expert = Expert { env: cfg.env };
        let ep = record_episode(
            &world,
            &mut expert,
            derive_seed(cfg.seed, DEMO_STREAM + ((i as u64) << 16)),
            i,
            None,
        )?;
        for t in ep.transitions {
            pools.push_demo(t.clone())?;
            demos.transitions.push(t);
        }
    }

    let mut action_rng = rng_from(derive_seed(cfg.seed, ACTION_STREAM));
    let select_seed = derive_seed(cfg.seed, SELECT_STREAM);
    let mut best: Option<(f64, u64, Agent<f32>)> = None;
    let mut selection = Vec::new();
    let mut episode = cfg.demos;
    let mut intervened_steps = 0u64;
    let mut steps = 0u64;

    while steps < cfg.budget {
        let (mut state, mut obs) = world.reset(derive_seed(
            derive_seed(cfg.seed, EPISODE_STREAM),
            episode as u64,
        ));
        let mut monitor = cfg.intervention.map(|r| r.monitor(state.distance()));
        loop {
            let takeover = monitor.as_ref().is_some_and(|m| m.taken_over());
            let (action, source) = if takeover {
                intervened_steps += 1;
                (world.expert_action(&state), ActionSource::Expert)
            } else {
                let noise = [
                    StandardNormal.sample(&mut action_rng),
                    StandardNormal.sample(&mut action_rng),
                ];
                (
                    learner.agent().act_sample(&obs, noise)?,
                    ActionSource::Policy,
                )
            };
            let step = world.step(&state, action);
            let t = Transition {
                episode,
                step: state.step,
                light: LightTag::Source,
                source,
                state: Some(state),
                next_state: Some(step.state),
                obs,
                action,
                reward: step.reward,
                next_obs: step.obs.clone(),
                done: step.done,
            };
            if source == ActionSource::Expert {
                demos.transitions.push(t.clone());
            }
            rl.transitions.push(t.clone());
            pools.push_stream(t);
            if let Some(m) = monitor.as_mut() {
                m.observe(step.state.distance());
            }
            steps += 1;

            if steps > cfg.learning_starts {
                learner.step(&pools, &mut sampler, None, 0)?;
            }
            if cfg.eval_every > 0 && (steps.is_multiple_of(cfg.eval_every) || steps == cfg.budget) {
                let report = evaluate(
                    learner.agent(),
                    &setup,
                    0.0,
                    cfg.eval_episodes,
                    select_seed,
                    None,
                )?;
                let sr = report.success_rate;
                selection.push((steps, sr));
                on_eval(steps, sr);
                if best.as_ref().is_none_or(|(b, _, _)| sr > *b) {
                    best = Some((sr, steps, learner.agent().clone()));
                }
            }

            state = step.state;
            obs = step.obs;
            if step.done || step.truncated || steps >= cfg.budget {
                break;
            }
        }
        episode += 1;
    }

    let final_agent = learner.into_agent();
    let (agent, best_step) = match best {
        Some((_, step, agent)) => (agent, step),
        None => (final_agent.clone(), 0),
    };
    Ok(SourceRun {
        agent,
        best_step,
        final_agent,
        selection,
        rl,
        demos,
        episodes: episode - cfg.demos,
        intervened_steps,
    })
}
