//! Policy evaluation along the source → deploy illumination path.

use alloc::format;
use alloc::string::String;

use crate::datasets::{record_episode, Controller};
use crate::learners::InterventionRule;
use crate::litworld::{
    interpolate_light, EnvConfig, IlluminationConfig, LitWorld, Observation, WorldState,
};
use crate::nets::Agent;
use crate::numerics::Real;
use crate::rng::derive_seed;
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Where evaluation happens: dynamics plus the two endpoint lights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSetup {
    pub env: EnvConfig,
    pub source: IlluminationConfig,
    pub deploy: IlluminationConfig,
}

impl Default for EvalSetup {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            source: IlluminationConfig::source_default(),
            deploy: IlluminationConfig::deploy_default(),
        }
    }
}

impl EvalSetup {
    /// World rendered at shift intensity `s`; dynamics do not depend on `s`.
    pub fn world_at(&self, shift: f64) -> Result<LitWorld> {
        if !(0.0..=1.0).contains(&shift) {
            return Err(Error::OutOfRange {
                what: "shift intensity",
                value: shift,
            });
        }
        let light = interpolate_light(&self.source, &self.deploy, shift as f32)?;
        Ok(LitWorld::new(self.env, light))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub shift: f64,
    pub light_id: String,
    pub episodes: u32,
    pub successes: u32,
    pub success_rate: f64,
    /// Mean steps over successful episodes; absent with zero successes.
    pub mean_success_steps: Option<f64>,
    /// Fraction of steps under expert control; only in intervention mode.
    pub intervention_rate: Option<f64>,
    pub seed: u64,
}

impl EvalReport {
    pub fn shift_pct(&self) -> u32 {
        (self.shift * 100.0).round() as u32
    }
}

/// Acts with the deterministic mean action `tanh(μ)`.
pub struct GreedyPolicy<'a, T> {
    pub agent: &'a Agent<T>,
}

impl<T: Real> Controller for GreedyPolicy<'_, T> {
    fn act(&mut self, obs: &Observation, _state: &WorldState) -> Result<[f32; 2]> {
        self.agent.act_mean(obs)
    }
}

/// Seed of evaluation episode `i`. Shared by every shift so that runs at
/// different intensities face the same start states.
pub fn episode_seed(seed: u64, i: u32) -> u64 {
    derive_seed(derive_seed(seed, 0xE7A1), i as u64)
}

pub fn evaluate_controller(
    controller: &mut dyn Controller,
    setup: &EvalSetup,
    shift: f64,
    episodes: u32,
    seed: u64,
    intervention: Option<&InterventionRule>,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::OutOfRange {
            what: "evaluation episodes",
            value: 0.0,
        });
    }
    let world = setup.world_at(shift)?;
    let mut successes = 0u32;
    let mut success_steps = 0u64;
    let mut steps = 0u64;
    let mut intervened = 0u64;
    for i in 0..episodes {
        let ep = record_episode(&world, controller, episode_seed(seed, i), i, intervention)?;
        steps += ep.steps as u64;
        intervened += ep.intervened_steps as u64;
        if ep.success {
            successes += 1;
            success_steps += ep.steps as u64;
        }
    }
    Ok(EvalReport {
        shift,
        light_id: format!("shift-{:03}", (shift * 100.0).round() as u32),
        episodes,
        successes,
        success_rate: successes as f64 / episodes as f64,
        mean_success_steps: (successes > 0).then(|| success_steps as f64 / successes as f64),
        intervention_rate: intervention.map(|_| intervened as f64 / steps.max(1) as f64),
        seed,
    })
}

/// Greedy-policy evaluation at shift `s`.
pub fn evaluate<T: Real>(
    agent: &Agent<T>,
    setup: &EvalSetup,
    shift: f64,
    episodes: u32,
    seed: u64,
    intervention: Option<&InterventionRule>,
) -> Result<EvalReport> {
    evaluate_controller(
        &mut GreedyPolicy { agent },
        setup,
        shift,
        episodes,
        seed,
        intervention,
    )
}
