//! Source training and the anchored offline fine-tune.

mod batch;
mod finetune;
mod learner;
mod losses;
mod source;

pub use batch::{AnchorCache, AnchorTargets, Batch};
pub use finetune::{finetune, FinetuneRun, CHECK_EVERY};
pub use learner::{learner_step, Learner, StepStats};
pub use losses::{actor_loss, bellman_target, critic_loss, ActorTerms, AgentVars, CriticTerms};
pub use source::{train_source, SourceConfig, SourceRun};

use crate::{Error, Result};

/// Which term pulls the actor toward θ₀ during fine-tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnchorHead {
    /// Squared distance between pre-tanh means.
    Mse,
    /// `D_KL(π_θ₀ ‖ π_θ)` on the pre-tanh Gaussians.
    Kl,
    /// No anchors at all, feature anchor included.
    None,
}

impl AnchorHead {
    pub fn name(self) -> &'static str {
        match self {
            AnchorHead::Mse => "mse",
            AnchorHead::Kl => "kl",
            AnchorHead::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mse" => Some(AnchorHead::Mse),
            "kl" => Some(AnchorHead::Kl),
            "none" => Some(AnchorHead::None),
            _ => None,
        }
    }

    pub fn anchored(self) -> bool {
        self != AnchorHead::None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    /// Fixed entropy temperature η.
    pub eta: f64,
    pub tau: f64,
    pub batch: usize,
    pub lr: f64,
    pub lambda_feat: f64,
    pub beta_mse: f64,
    pub rho_end: f64,
    /// Fine-tune horizon in learner steps.
    pub horizon: u64,
    pub anchor_head: AnchorHead,
    /// Retention coefficient for the fine-tune sampler.
    pub alpha: f64,
    /// Minibatch noise and initialization streams.
    pub seed: u64,
    /// Sampler stream.
    pub replay_seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.97,
            eta: 0.01,
            tau: 0.005,
            batch: 256,
            lr: 1e-3,
            lambda_feat: 0.2,
            beta_mse: 0.1,
            rho_end: 0.33,
            horizon: 15_000,
            anchor_head: AnchorHead::Mse,
            alpha: 0.75,
            seed: 0,
            replay_seed: 1,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange { what, value })
            }
        };
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "learner.gamma",
            self.gamma,
        )?;
        check(
            self.eta > 0.0 && self.eta.is_finite(),
            "learner.eta",
            self.eta,
        )?;
        check((0.0..=1.0).contains(&self.tau), "learner.tau", self.tau)?;
        check(
            self.batch >= 2 && self.batch.is_multiple_of(2),
            "learner.batch",
            self.batch as f64,
        )?;
        check(self.lr >= 0.0 && self.lr.is_finite(), "learner.lr", self.lr)?;
        check(
            self.lambda_feat >= 0.0 && self.lambda_feat.is_finite(),
            "learner.lambda_feat",
            self.lambda_feat,
        )?;
        check(
            self.beta_mse >= 0.0 && self.beta_mse.is_finite(),
            "learner.beta_mse",
            self.beta_mse,
        )?;
        check(
            (0.0..=1.0).contains(&self.rho_end),
            "learner.rho_end",
            self.rho_end,
        )?;
        check(
            (0.0..=1.0).contains(&self.alpha),
            "replay.alpha",
            self.alpha,
        )?;
        Ok(())
    }
}

/// Anchor weight schedule `1 − (1 − ρ_end)·t/T`.
pub fn rho(t: u64, horizon: u64, rho_end: f64) -> Result<f64> {
    if t > horizon {
        return Err(Error::OutOfRange {
            what: "anchor schedule step t > T",
            value: t as f64,
        });
    }
    if horizon == 0 {
        return Ok(1.0);
    }
    if t == horizon {
        return Ok(rho_end);
    }
    Ok(1.0 - (1.0 - rho_end) * t as f64 / horizon as f64)
}

/// Expert takeover when distance-to-target has not improved on its best
/// value for `stall_window` consecutive steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterventionRule {
    pub stall_window: u32,
}

impl Default for InterventionRule {
    fn default() -> Self {
        Self { stall_window: 10 }
    }
}

impl InterventionRule {
    pub fn monitor(&self, initial_distance: f32) -> InterventionMonitor {
        InterventionMonitor {
            window: self.stall_window,
            best: initial_distance,
            stalled: 0,
            taken_over: false,
        }
    }
}

/// Per-episode state of an [`InterventionRule`].
#[derive(Clone, Copy, Debug)]
pub struct InterventionMonitor {
    window: u32,
    best: f32,
    stalled: u32,
    taken_over: bool,
}

impl InterventionMonitor {
    pub fn observe(&mut self, distance: f32) {
        if self.taken_over {
            return;
        }
        if distance < self.best {
            self.best = distance;
            self.stalled = 0;
        } else {
            self.stalled += 1;
            if self.stalled >= self.window {
                self.taken_over = true;
            }
        }
    }

    /// Sticky: once true, stays true for the episode.
    pub fn taken_over(&self) -> bool {
        self.taken_over
    }
}
