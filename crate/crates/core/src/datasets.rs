//! Recorded transitions, episode recording with interventions, and
//! procedural relighting from stored world states.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::learners::InterventionRule;
use crate::litworld::{
    render, EnvConfig, IlluminationConfig, LitWorld, Observation, WorldState, ACTION_DIM,
    IMAGE_BYTES, IMAGE_CHANNELS, IMAGE_SIDE,
};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Which light an observation was rendered under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LightTag {
    Source,
    /// Relighting condition `k ∈ 1..=4`.
    Relit(u8),
}

impl LightTag {
    pub const MAX_RELIT: u8 = 4;

    pub fn code(self) -> u8 {
        match self {
            LightTag::Source => 0,
            LightTag::Relit(k) => k,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LightTag::Source),
            k @ 1..=Self::MAX_RELIT => Some(LightTag::Relit(k)),
            _ => None,
        }
    }

    pub fn is_source(self) -> bool {
        self == LightTag::Source
    }
}

/// Who chose the recorded action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionSource {
    Policy,
    Expert,
}

impl ActionSource {
    pub fn code(self) -> u8 {
        match self {
            ActionSource::Policy => 0,
            ActionSource::Expert => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(ActionSource::Policy),
            1 => Some(ActionSource::Expert),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub episode: u32,
    pub step: u32,
    pub light: LightTag,
    pub source: ActionSource,
    /// Ground truth for re-rendering; `None` when the record lost it.
    pub state: Option<WorldState>,
    pub next_state: Option<WorldState>,
    pub obs: Observation,
    pub action: [f32; ACTION_DIM],
    pub reward: f32,
    pub next_obs: Observation,
    pub done: bool,
}

impl Transition {
    /// Every field except the two observations.
    pub fn same_non_visual(&self, other: &Transition) -> bool {
        self.episode == other.episode
            && self.step == other.step
            && self.source == other.source
            && self.state == other.state
            && self.next_state == other.next_state
            && self.action.map(f32::to_bits) == other.action.map(f32::to_bits)
            && self.reward.to_bits() == other.reward.to_bits()
            && self.done == other.done
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub height: u16,
    pub width: u16,
    pub channels: u8,
    pub action_dim: u8,
    /// Entry 0 is the source light; entry `k` is relighting condition `k`.
    pub lights: Vec<IlluminationConfig>,
}

impl DatasetHeader {
    pub fn new(lights: Vec<IlluminationConfig>) -> Self {
        Self {
            height: IMAGE_SIDE as u16,
            width: IMAGE_SIDE as u16,
            channels: IMAGE_CHANNELS as u8,
            action_dim: ACTION_DIM as u8,
            lights,
        }
    }

    pub fn image_bytes(&self) -> usize {
        self.height as usize * self.width as usize * self.channels as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub header: DatasetHeader,
    pub transitions: Vec<Transition>,
}

impl TrajectoryDataset {
    pub fn new(source_light: IlluminationConfig) -> Self {
        Self {
            header: DatasetHeader::new(vec![source_light]),
            transitions: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Header agrees with every record and each episode is one contiguous run.
    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.image_bytes() != IMAGE_BYTES || h.action_dim as usize != ACTION_DIM {
            return Err(Error::InvalidTransition(format!(
                "header declares {}×{}×{} images and {} action dims",
                h.height, h.width, h.channels, h.action_dim
            )));
        }
        if h.lights.is_empty() {
            return Err(Error::InvalidTransition("empty light table".into()));
        }
        let mut seen: Vec<u32> = Vec::new();
        let mut current: Option<u32> = None;
        for (i, t) in self.transitions.iter().enumerate() {
            if t.obs.image.len() != IMAGE_BYTES || t.next_obs.image.len() != IMAGE_BYTES {
                return Err(Error::InvalidTransition(format!(
                    "record {i}: image extents"
                )));
            }
            if t.light.code() as usize >= h.lights.len() {
                return Err(Error::InvalidTransition(format!(
                    "record {i}: light {:?} not in a {}-entry light table",
                    t.light,
                    h.lights.len()
                )));
            }
            if current != Some(t.episode) {
                if seen.contains(&t.episode) {
                    return Err(Error::InvalidTransition(format!(
                        "record {i}: episode {} is not contiguous",
                        t.episode
                    )));
                }
                seen.push(t.episode);
                current = Some(t.episode);
            }
        }
        Ok(())
    }

    /// Fraction of episodes whose last record is a success.
    pub fn episode_success_fraction(&self) -> f64 {
        let mut episodes = 0usize;
        let mut successes = 0usize;
        for (i, t) in self.transitions.iter().enumerate() {
            let last = self
                .transitions
                .get(i + 1)
                .is_none_or(|n| n.episode != t.episode || n.light != t.light);
            if last {
                episodes += 1;
                successes += t.done as usize;
            }
        }
        if episodes == 0 {
            0.0
        } else {
            successes as f64 / episodes as f64
        }
    }
}

/// Chooses actions during a rollout.
pub trait Controller {
    fn act(&mut self, obs: &Observation, state: &WorldState) -> Result<[f32; ACTION_DIM]>;

    /// Tag recorded for actions this controller chooses.
    fn source(&self) -> ActionSource {
        ActionSource::Policy
    }
}

/// State-feedback oracle; never looks at pixels.
#[derive(Clone, Copy, Debug)]
pub struct Expert {
    pub env: EnvConfig,
}

impl Controller for Expert {
    fn act(&mut self, _obs: &Observation, state: &WorldState) -> Result<[f32; ACTION_DIM]> {
        let world = LitWorld::new(self.env, IlluminationConfig::source_default());
        Ok(world.expert_action(state))
    }

    fn source(&self) -> ActionSource {
        ActionSource::Expert
    }
}

impl<F: FnMut(&Observation, &WorldState) -> Result<[f32; ACTION_DIM]>> Controller for F {
    fn act(&mut self, obs: &Observation, state: &WorldState) -> Result<[f32; ACTION_DIM]> {
        self(obs, state)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub success: bool,
    pub steps: u32,
    pub intervened_steps: u32,
}

/// Roll one episode, tagging each step with who acted.
///
/// With an intervention rule, the expert takes over for the rest of the
/// episode once the policy stalls; those steps are tagged `Expert`.
pub fn record_episode(
    world: &LitWorld,
    controller: &mut dyn Controller,
    seed: u64,
    episode: u32,
    intervention: Option<&InterventionRule>,
) -> Result<Episode> {
    let (mut state, mut obs) = world.reset(seed);
    let mut transitions = Vec::with_capacity(world.config.max_steps as usize);
    let mut monitor = intervention.map(|rule| rule.monitor(state.distance()));
    let mut intervened_steps = 0;
    loop {
        let expert_in_control = monitor.as_ref().is_some_and(|m| m.taken_over());
        let (action, source) = if expert_in_control {
            intervened_steps += 1;
            (world.expert_action(&state), ActionSource::Expert)
        } else {
            (controller.act(&obs, &state)?, controller.source())
        };
        let step = world.step(&state, action);
        transitions.push(Transition {
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
        });
        if let Some(m) = monitor.as_mut() {
            m.observe(step.state.distance());
        }
        state = step.state;
        obs = step.obs;
        if step.done || step.truncated {
            return Ok(Episode {
                success: step.done,
                steps: state.step,
                intervened_steps,
                transitions,
            });
        }
    }
}

/// Knobs for [`relight_dataset`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelightOptions {
    /// Half-width of uniform per-byte noise, in `[0, 1]` intensity units.
    pub noise: f32,
    pub seed: u64,
}

impl Default for RelightOptions {
    fn default() -> Self {
        Self {
            noise: 0.0,
            seed: 0,
        }
    }
}

fn rerender(
    state: &WorldState,
    light: &IlluminationConfig,
    noise: f32,
    rng: &mut crate::rng::Rng,
) -> Vec<u8> {
    let mut image = render(state, light);
    if noise > 0.0 {
        for b in &mut image {
            let jitter = rng.gen_range(-noise..=noise) * 255.0;
            *b = (*b as f32 + jitter).round().clamp(0.0, 255.0) as u8;
        }
    }
    image
}

/// Re-render every source record under each of `lights`, keeping all
/// non-visual fields bit-identical.
///
/// Output order: per episode, all steps under K1, then K2, K3, K4.
pub fn relight_dataset(
    ds: &TrajectoryDataset,
    lights: &[IlluminationConfig; 4],
    options: RelightOptions,
) -> Result<TrajectoryDataset> {
    let mut header_lights = vec![ds.header.lights[0]];
    header_lights.extend_from_slice(lights);
    let mut out = Vec::with_capacity(ds.len() * lights.len());
    let mut start = 0;
    while start < ds.transitions.len() {
        let episode = ds.transitions[start].episode;
        let end = ds.transitions[start..]
            .iter()
            .position(|t| t.episode != episode)
            .map_or(ds.transitions.len(), |p| start + p);
        for (k, light) in lights.iter().enumerate() {
            let tag = LightTag::Relit(k as u8 + 1);
            for t in &ds.transitions[start..end] {
                if !t.light.is_source() {
                    return Err(Error::InvalidTransition(format!(
                        "episode {} step {} is already relit",
                        t.episode, t.step
                    )));
                }
                let missing = || Error::MissingWorldState {
                    episode: t.episode,
                    step: t.step,
                };
                let state = t.state.ok_or_else(missing)?;
                let next_state = t.next_state.ok_or_else(missing)?;
                let mut rng = rng_from(derive_seed(
                    options.seed,
                    ((t.episode as u64) << 32) | ((t.step as u64) << 4) | (k as u64 + 1),
                ));
                out.push(Transition {
                    light: tag,
                    obs: Observation {
                        image: rerender(&state, light, options.noise, &mut rng),
                        proprio: t.obs.proprio,
                    },
                    next_obs: Observation {
                        image: rerender(&next_state, light, options.noise, &mut rng),
                        proprio: t.next_obs.proprio,
                    },
                    ..t.clone()
                });
            }
        }
        start = end;
    }
    Ok(TrajectoryDataset {
        header: DatasetHeader::new(header_lights),
        transitions: out,
    })
}
