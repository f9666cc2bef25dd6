//! Flat `key = value` experiment configuration.
//!
//! The file is TOML restricted to scalars and scalar arrays; tables and
//! dotted keys are flattened to `a.b.c` before lookup. Every key must be
//! known.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rohil_core::learners::{AnchorHead, InterventionRule, LearnerConfig, SourceConfig};
use rohil_core::litworld::{EnvConfig, IlluminationConfig};
use rohil_core::rng::mix64;
use toml::Value;

#[derive(Debug)]
pub enum ConfigError {
    UnknownKey(String),
    Type {
        key: String,
        expected: &'static str,
        found: String,
    },
    Invalid {
        key: String,
        reason: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey(k) => write!(f, "unknown config key `{k}`"),
            ConfigError::Type {
                key,
                expected,
                found,
            } => write!(f, "`{key}`: expected {expected}, found {found}"),
            ConfigError::Invalid { key, reason } => write!(f, "`{key}`: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Per-light field suffixes, in [`IlluminationConfig::to_fields`] order.
pub const LIGHT_FIELDS: [&str; IlluminationConfig::FIELDS] = [
    "ambient",
    "diffuse",
    "angle",
    "specular_x",
    "specular_y",
    "specular_strength",
    "gain_r",
    "gain_g",
    "gain_b",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub episodes: u32,
    /// Headline shifted-light intensity.
    pub shift: f64,
    /// Evaluate with the stall-takeover oracle enabled.
    pub intervention: bool,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            shift: 0.6,
            intervention: false,
            seed: 0xE7A1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanConfig {
    pub seeds: Vec<u64>,
    pub shifts: Vec<f64>,
    pub alphas: Vec<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            shifts: vec![0.0, 0.6],
            alphas: alpha_grid(21),
        }
    }
}

/// `n` evenly spaced points on `[0, 1]`, endpoints exact.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i + 1 == n {
                    1.0
                } else {
                    i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Every knob of the laboratory.
#[derive(Clone, Debug, PartialEq)]
pub struct LabConfig {
    pub env: EnvConfig,
    pub source_light: IlluminationConfig,
    pub deploy_light: IlluminationConfig,
    pub relight_lights: [IlluminationConfig; 4],
    pub relight_noise: f32,
    pub relight_seed: u64,
    pub learner: LearnerConfig,
    pub source_budget: u64,
    pub source_demos: u32,
    pub source_eval_every: u64,
    pub source_eval_episodes: u32,
    pub source_learning_starts: u64,
    pub source_intervention: bool,
    pub stall_window: u32,
    pub eval: EvalConfig,
    pub plan: PlanConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        let source = SourceConfig::default();
        Self {
            env: EnvConfig::default(),
            source_light: IlluminationConfig::source_default(),
            deploy_light: IlluminationConfig::deploy_default(),
            relight_lights: IlluminationConfig::relight_defaults(),
            relight_noise: 0.0,
            relight_seed: 0,
            learner: LearnerConfig::default(),
            source_budget: source.budget,
            source_demos: source.demos,
            source_eval_every: source.eval_every,
            source_eval_episodes: source.eval_episodes,
            source_learning_starts: source.learning_starts,
            source_intervention: source.intervention.is_some(),
            stall_window: InterventionRule::default().stall_window,
            eval: EvalConfig::default(),
            plan: PlanConfig::default(),
        }
    }
}

fn describe(v: &Value) -> String {
    format!("{} `{v}`", v.type_str())
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::Type {
            key: key.into(),
            expected: "a number",
            found: describe(v),
        }),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(ConfigError::Type {
            key: key.into(),
            expected: "a nonnegative integer",
            found: describe(v),
        }),
    }
}

fn as_u32(key: &str, v: &Value) -> Result<u32, ConfigError> {
    let n = as_u64(key, v)?;
    u32::try_from(n).map_err(|_| ConfigError::Invalid {
        key: key.into(),
        reason: format!("{n} does not fit in u32"),
    })
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| ConfigError::Type {
        key: key.into(),
        expected: "a boolean",
        found: describe(v),
    })
}

fn as_list<T>(
    key: &str,
    v: &Value,
    item: impl Fn(&str, &Value) -> Result<T, ConfigError>,
) -> Result<Vec<T>, ConfigError> {
    match v {
        Value::Array(a) => a.iter().map(|x| item(key, x)).collect(),
        _ => Err(ConfigError::Type {
            key: key.into(),
            expected: "an array",
            found: describe(v),
        }),
    }
}

fn flatten(
    prefix: &str,
    table: &toml::Table,
    out: &mut BTreeMap<String, Value>,
) -> Result<(), ConfigError> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out)?,
            _ => {
                if out.insert(key.clone(), v.clone()).is_some() {
                    return Err(ConfigError::Invalid {
                        key,
                        reason: "given twice".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

impl std::str::FromStr for LabConfig {
    type Err = anyhow::Error;

    fn from_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .context("config is not valid key = value text")?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat)?;
        let mut cfg = LabConfig::default();
        let mut batch_keys = Vec::new();
        for (key, value) in &flat {
            if key == "learner.batch" || key == "replay.batch_size" {
                batch_keys.push((key.as_str(), as_u64(key, value)?));
            }
            cfg.set(key, value)?;
        }
        if let [(k1, a), (k2, b)] = batch_keys[..] {
            if a != b {
                bail!(ConfigError::Invalid {
                    key: k2.into(),
                    reason: format!("{b} disagrees with `{k1}` = {a}")
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl LabConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        text.parse::<Self>()
            .with_context(|| format!("in {}", path.display()))
    }

    fn light_mut(&mut self, name: &str) -> Option<&mut IlluminationConfig> {
        Some(match name {
            "source" => &mut self.source_light,
            "deploy" => &mut self.deploy_light,
            "relight.k1" => &mut self.relight_lights[0],
            "relight.k2" => &mut self.relight_lights[1],
            "relight.k3" => &mut self.relight_lights[2],
            "relight.k4" => &mut self.relight_lights[3],
            _ => return None,
        })
    }

    fn set(&mut self, key: &str, v: &Value) -> Result<(), ConfigError> {
        let l = &mut self.learner;
        match key {
            "env.step_size" => self.env.step_size = as_f64(key, v)? as f32,
            "env.success_radius" => self.env.success_radius = as_f64(key, v)? as f32,
            "env.max_steps" => self.env.max_steps = as_u32(key, v)?,
            "relight.noise" => self.relight_noise = as_f64(key, v)? as f32,
            "relight.seed" => self.relight_seed = as_u64(key, v)?,
            "replay.alpha" => l.alpha = as_f64(key, v)?,
            "replay.batch_size" | "learner.batch" => l.batch = as_u64(key, v)? as usize,
            "replay.seed" => l.replay_seed = as_u64(key, v)?,
            "learner.gamma" => l.gamma = as_f64(key, v)?,
            "learner.eta" => l.eta = as_f64(key, v)?,
            "learner.tau" => l.tau = as_f64(key, v)?,
            "learner.lr" => l.lr = as_f64(key, v)?,
            "learner.T" => l.horizon = as_u64(key, v)?,
            "learner.lambda_feat" => l.lambda_feat = as_f64(key, v)?,
            "learner.beta_mse" => l.beta_mse = as_f64(key, v)?,
            "learner.rho_end" => l.rho_end = as_f64(key, v)?,
            "learner.seed" => l.seed = as_u64(key, v)?,
            "learner.anchor_head" => {
                let s = v.as_str().ok_or_else(|| ConfigError::Type {
                    key: key.into(),
                    expected: "one of \"mse\", \"kl\", \"none\"",
                    found: describe(v),
                })?;
                l.anchor_head = AnchorHead::parse(s).ok_or_else(|| ConfigError::Invalid {
                    key: key.into(),
                    reason: format!("`{s}` is not one of mse, kl, none"),
                })?;
            }
            "source.budget" => self.source_budget = as_u64(key, v)?,
            "source.demos" => self.source_demos = as_u32(key, v)?,
            "source.eval_every" => self.source_eval_every = as_u64(key, v)?,
            "source.eval_episodes" => self.source_eval_episodes = as_u32(key, v)?,
            "source.learning_starts" => self.source_learning_starts = as_u64(key, v)?,
            "source.intervention" => self.source_intervention = as_bool(key, v)?,
            "source.stall_window" => self.stall_window = as_u32(key, v)?,
            "eval.episodes" => self.eval.episodes = as_u32(key, v)?,
            "eval.shift" => self.eval.shift = as_f64(key, v)?,
            "eval.intervention" => self.eval.intervention = as_bool(key, v)?,
            "eval.seed" => self.eval.seed = as_u64(key, v)?,
            "plan.seeds" => self.plan.seeds = as_list(key, v, as_u64)?,
            "plan.shifts" => self.plan.shifts = as_list(key, v, as_f64)?,
            "plan.alphas" => self.plan.alphas = as_list(key, v, as_f64)?,
            _ => {
                let (light, field) = key
                    .strip_prefix("light.")
                    .and_then(|rest| rest.rsplit_once('.'))
                    .ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
                let idx = LIGHT_FIELDS
                    .iter()
                    .position(|f| *f == field)
                    .ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
                let value = as_f64(key, v)? as f32;
                let target = self
                    .light_mut(light)
                    .ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
                let mut fields = target.to_fields();
                fields[idx] = value;
                *target = IlluminationConfig::from_fields(fields);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        for (name, light) in self.lights() {
            light.validate().with_context(|| format!("light.{name}"))?;
        }
        self.learner.validate()?;
        let invalid = |key: &str, reason: &str| ConfigError::Invalid {
            key: key.into(),
            reason: reason.into(),
        };
        if !(0.0..=1.0).contains(&self.relight_noise) {
            bail!(invalid("relight.noise", "must lie in [0, 1]"));
        }
        if self.eval.episodes == 0 {
            bail!(invalid("eval.episodes", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.eval.shift) {
            bail!(invalid("eval.shift", "must lie in [0, 1]"));
        }
        if self.plan.seeds.is_empty() {
            bail!(invalid("plan.seeds", "must not be empty"));
        }
        let mut seeds = self.plan.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.plan.seeds.len() {
            bail!(invalid("plan.seeds", "seeds must be distinct"));
        }
        if self.plan.shifts.is_empty() || self.plan.shifts.iter().any(|s| !(0.0..=1.0).contains(s))
        {
            bail!(invalid("plan.shifts", "must be a nonempty list in [0, 1]"));
        }
        if self.plan.alphas.is_empty() || self.plan.alphas.iter().any(|a| !(0.0..=1.0).contains(a))
        {
            bail!(invalid("plan.alphas", "must be a nonempty list in [0, 1]"));
        }
        if self.stall_window == 0 {
            bail!(invalid("source.stall_window", "must be positive"));
        }
        Ok(())
    }

    fn lights(&self) -> [(&'static str, &IlluminationConfig); 6] {
        [
            ("source", &self.source_light),
            ("deploy", &self.deploy_light),
            ("relight.k1", &self.relight_lights[0]),
            ("relight.k2", &self.relight_lights[1]),
            ("relight.k3", &self.relight_lights[2]),
            ("relight.k4", &self.relight_lights[3]),
        ]
    }

    /// Canonical listing of every key, sorted, in config syntax.
    pub fn to_text(&self) -> String {
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| entries.push((k.to_string(), v));
        let l = &self.learner;
        put(
            "env.step_size",
            Value::from(self.env.step_size as f64).to_string(),
        );
        put(
            "env.success_radius",
            Value::from(self.env.success_radius as f64).to_string(),
        );
        put("env.max_steps", self.env.max_steps.to_string());
        for (name, light) in self.lights() {
            for (field, v) in LIGHT_FIELDS.iter().zip(light.to_fields()) {
                put(
                    &format!("light.{name}.{field}"),
                    Value::from(v as f64).to_string(),
                );
            }
        }
        put(
            "relight.noise",
            Value::from(self.relight_noise as f64).to_string(),
        );
        put("relight.seed", self.relight_seed.to_string());
        put("replay.alpha", Value::from(l.alpha).to_string());
        put("replay.batch_size", l.batch.to_string());
        put("replay.seed", l.replay_seed.to_string());
        put("learner.gamma", Value::from(l.gamma).to_string());
        put("learner.eta", Value::from(l.eta).to_string());
        put("learner.tau", Value::from(l.tau).to_string());
        put("learner.lr", Value::from(l.lr).to_string());
        put("learner.batch", l.batch.to_string());
        put("learner.T", l.horizon.to_string());
        put(
            "learner.lambda_feat",
            Value::from(l.lambda_feat).to_string(),
        );
        put("learner.beta_mse", Value::from(l.beta_mse).to_string());
        put("learner.rho_end", Value::from(l.rho_end).to_string());
        put(
            "learner.anchor_head",
            format!("\"{}\"", l.anchor_head.name()),
        );
        put("learner.seed", l.seed.to_string());
        put("source.budget", self.source_budget.to_string());
        put("source.demos", self.source_demos.to_string());
        put("source.eval_every", self.source_eval_every.to_string());
        put(
            "source.eval_episodes",
            self.source_eval_episodes.to_string(),
        );
        put(
            "source.learning_starts",
            self.source_learning_starts.to_string(),
        );
        put("source.intervention", self.source_intervention.to_string());
        put("source.stall_window", self.stall_window.to_string());
        put("eval.episodes", self.eval.episodes.to_string());
        put("eval.shift", Value::from(self.eval.shift).to_string());
        put("eval.intervention", self.eval.intervention.to_string());
        put("eval.seed", self.eval.seed.to_string());
        put(
            "plan.seeds",
            Value::from(
                self.plan
                    .seeds
                    .iter()
                    .map(|&s| s as i64)
                    .collect::<Vec<_>>(),
            )
            .to_string(),
        );
        put(
            "plan.shifts",
            Value::from(self.plan.shifts.clone()).to_string(),
        );
        put(
            "plan.alphas",
            Value::from(self.plan.alphas.clone()).to_string(),
        );
        entries.sort();
        entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Stable 64-bit digest of [`to_text`](Self::to_text), stored in checkpoints.
    pub fn hash(&self) -> u64 {
        self.to_text()
            .bytes()
            .fold(0x524F_4849_4C00_0001u64, |h, b| mix64(h ^ b as u64))
    }

    pub fn intervention_rule(&self) -> InterventionRule {
        InterventionRule {
            stall_window: self.stall_window,
        }
    }

    /// Source-stage settings for one experiment seed.
    pub fn source_config(&self, seed: u64) -> SourceConfig {
        SourceConfig {
            env: self.env,
            light: self.source_light,
            budget: self.source_budget,
            demos: self.source_demos,
            eval_every: self.source_eval_every,
            eval_episodes: self.source_eval_episodes,
            learning_starts: self.source_learning_starts,
            intervention: self.source_intervention.then(|| self.intervention_rule()),
            learner: self.learner,
            seed,
        }
    }
}
