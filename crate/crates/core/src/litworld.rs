//! A pixel-rendered 2D reaching world under a parametric light model.
//!
//! The agent (red disk) must reach the target (green disk) inside the unit
//! square. Dynamics never depend on the light; only the rendered image does.

use alloc::vec::Vec;
use core::f32::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};

pub const IMAGE_SIDE: usize = 16;
pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_BYTES: usize = IMAGE_SIDE * IMAGE_SIDE * IMAGE_CHANNELS;
pub const PROPRIO_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

const DISK_RADIUS: f32 = 0.08;
const SPECULAR_WIDTH: f32 = 0.12;
const DIFFUSE_NORM: f32 = core::f32::consts::FRAC_1_SQRT_2;
const AGENT_COLOR: [f32; 3] = [0.9, 0.2, 0.2];
const TARGET_COLOR: [f32; 3] = [0.2, 0.9, 0.2];
const FLOOR_COLOR: [f32; 3] = [0.5, 0.5, 0.5];
const RESET_TAG: u64 = 0x5EED_0001;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldState {
    pub agent: [f32; 2],
    pub target: [f32; 2],
    pub step: u32,
}

impl WorldState {
    pub fn distance(&self) -> f32 {
        dist(self.agent, self.target)
    }
}

fn dist(a: [f32; 2], b: [f32; 2]) -> f32 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Ambient + directional diffuse + one specular blob, then per-channel gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlluminationConfig {
    pub ambient: f32,
    pub diffuse: f32,
    /// Direction of the diffuse gradient, radians in `[0, 2π)`.
    pub angle: f32,
    pub specular_center: [f32; 2],
    pub specular_strength: f32,
    pub gains: [f32; 3],
}

impl IlluminationConfig {
    pub const FIELDS: usize = 9;

    pub fn source_default() -> Self {
        Self {
            ambient: 0.6,
            diffuse: 0.3,
            angle: FRAC_PI_4,
            specular_center: [0.25, 0.25],
            specular_strength: 0.2,
            gains: [1.0, 1.0, 1.0],
        }
    }

    pub fn deploy_default() -> Self {
        Self {
            ambient: 0.3,
            diffuse: 0.7,
            angle: 5.0 * FRAC_PI_4,
            specular_center: [0.7, 0.6],
            specular_strength: 0.5,
            gains: [1.4, 0.9, 0.6],
        }
    }

    /// The four relighting conditions K1..K4.
    pub fn relight_defaults() -> [Self; 4] {
        let k = |ambient, diffuse, angle, c: [f32; 2], spec, gains| Self {
            ambient,
            diffuse,
            angle,
            specular_center: c,
            specular_strength: spec,
            gains,
        };
        [
            k(0.7, 0.2, FRAC_PI_2, [0.5, 0.8], 0.1, [1.2, 1.2, 0.8]),
            k(0.25, 0.6, PI, [0.2, 0.7], 0.4, [0.7, 0.8, 1.5]),
            k(0.5, 0.5, 3.0 * FRAC_PI_2, [0.8, 0.2], 0.3, [1.5, 0.7, 0.7]),
            k(0.35, 0.4, 0.0, [0.5, 0.5], 0.6, [0.9, 1.4, 0.9]),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let check = |what: &'static str, v: f32, lo: f32, hi: f32, hi_open: bool| {
            let ok = v.is_finite() && v >= lo && if hi_open { v < hi } else { v <= hi };
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    what,
                    value: v as f64,
                })
            }
        };
        check("light.ambient", self.ambient, 0.2, 0.8, false)?;
        check("light.diffuse", self.diffuse, 0.0, 0.8, false)?;
        check("light.angle", self.angle, 0.0, TAU, true)?;
        check(
            "light.specular_center.x",
            self.specular_center[0],
            0.0,
            1.0,
            false,
        )?;
        check(
            "light.specular_center.y",
            self.specular_center[1],
            0.0,
            1.0,
            false,
        )?;
        check(
            "light.specular_strength",
            self.specular_strength,
            0.0,
            0.6,
            false,
        )?;
        for &g in &self.gains {
            check("light.gain", g, 0.4, 1.6, false)?;
        }
        Ok(())
    }

    /// Field order used by the dataset light table.
    pub fn to_fields(&self) -> [f32; Self::FIELDS] {
        [
            self.ambient,
            self.diffuse,
            self.angle,
            self.specular_center[0],
            self.specular_center[1],
            self.specular_strength,
            self.gains[0],
            self.gains[1],
            self.gains[2],
        ]
    }

    pub fn from_fields(f: [f32; Self::FIELDS]) -> Self {
        Self {
            ambient: f[0],
            diffuse: f[1],
            angle: f[2],
            specular_center: [f[3], f[4]],
            specular_strength: f[5],
            gains: [f[6], f[7], f[8]],
        }
    }
}

fn wrap_angle(a: f32) -> f32 {
    let w = a - TAU * (a / TAU).floor();
    // can round up to TAU itself
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Per-field linear blend; the angle travels along the shorter arc.
pub fn interpolate_light(
    src: &IlluminationConfig,
    tgt: &IlluminationConfig,
    s: f32,
) -> Result<IlluminationConfig> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange {
            what: "shift intensity",
            value: s as f64,
        });
    }
    if s == 0.0 {
        return Ok(*src);
    }
    if s == 1.0 {
        return Ok(*tgt);
    }
    let lerp = |a: f32, b: f32| (1.0 - s) * a + s * b;
    let mut delta = wrap_angle(tgt.angle - src.angle);
    if delta > PI {
        delta -= TAU;
    }
    Ok(IlluminationConfig {
        ambient: lerp(src.ambient, tgt.ambient),
        diffuse: lerp(src.diffuse, tgt.diffuse),
        angle: wrap_angle(src.angle + s * delta),
        specular_center: [
            lerp(src.specular_center[0], tgt.specular_center[0]),
            lerp(src.specular_center[1], tgt.specular_center[1]),
        ],
        specular_strength: lerp(src.specular_strength, tgt.specular_strength),
        gains: [
            lerp(src.gains[0], tgt.gains[0]),
            lerp(src.gains[1], tgt.gains[1]),
            lerp(src.gains[2], tgt.gains[2]),
        ],
    })
}

/// Row-major `16 × 16 × 3` image; pixel `(row, col)` is centred at
/// `((col + ½)/16, (row + ½)/16)`.
pub fn render(state: &WorldState, light: &IlluminationConfig) -> Vec<u8> {
    let mut image = Vec::with_capacity(IMAGE_BYTES);
    let (cos_a, sin_a) = (light.angle.cos(), light.angle.sin());
    let spec_denom = 2.0 * SPECULAR_WIDTH * SPECULAR_WIDTH;
    for row in 0..IMAGE_SIDE {
        let py = (row as f32 + 0.5) / IMAGE_SIDE as f32;
        for col in 0..IMAGE_SIDE {
            let px = (col as f32 + 0.5) / IMAGE_SIDE as f32;
            let p = [px, py];
            let base = if dist(p, state.agent) <= DISK_RADIUS {
                AGENT_COLOR
            } else if dist(p, state.target) <= DISK_RADIUS {
                TARGET_COLOR
            } else {
                FLOOR_COLOR
            };
            let lum = light.ambient
                + light.diffuse * ((cos_a * (px - 0.5) + sin_a * (py - 0.5)) / DIFFUSE_NORM + 1.0)
                    / 2.0;
            let (sx, sy) = (px - light.specular_center[0], py - light.specular_center[1]);
            let spec = light.specular_strength * (-(sx * sx + sy * sy) / spec_denom).exp();
            for (&gain, &b) in light.gains.iter().zip(&base) {
                let v = (gain * (b * lum + spec)).clamp(0.0, 1.0);
                image.push((255.0 * v).round() as u8);
            }
        }
    }
    image
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    /// `16 × 16 × 3` bytes.
    pub image: Vec<u8>,
    /// Agent position.
    pub proprio: [f32; 2],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub step_size: f32,
    pub success_radius: f32,
    pub max_steps: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            success_radius: 0.05,
            max_steps: 60,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::OutOfRange {
                what: "env.step_size",
                value: self.step_size as f64,
            });
        }
        if !(self.success_radius > 0.0 && self.success_radius.is_finite()) {
            return Err(Error::OutOfRange {
                what: "env.success_radius",
                value: self.success_radius as f64,
            });
        }
        if self.max_steps == 0 {
            return Err(Error::OutOfRange {
                what: "env.max_steps",
                value: 0.0,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: WorldState,
    pub obs: Observation,
    pub reward: f32,
    /// Success only; a time-limit cut sets `truncated` instead.
    pub done: bool,
    pub truncated: bool,
}

/// One workstation: fixed dynamics plus the light the camera sees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LitWorld {
    pub config: EnvConfig,
    pub light: IlluminationConfig,
}

impl LitWorld {
    pub fn new(config: EnvConfig, light: IlluminationConfig) -> Self {
        Self { config, light }
    }

    pub fn observe(&self, state: &WorldState) -> Observation {
        Observation {
            image: render(state, &self.light),
            proprio: state.agent,
        }
    }

    /// Uniform placement with agent–target separation at least 3ε.
    pub fn reset(&self, seed: u64) -> (WorldState, Observation) {
        let mut rng = rng_from(derive_seed(seed, RESET_TAG));
        let min_sep = 3.0 * self.config.success_radius;
        let state = loop {
            let agent = [rng.gen::<f32>(), rng.gen::<f32>()];
            let target = [rng.gen::<f32>(), rng.gen::<f32>()];
            if dist(agent, target) >= min_sep {
                break WorldState {
                    agent,
                    target,
                    step: 0,
                };
            }
        };
        let obs = self.observe(&state);
        (state, obs)
    }

    pub fn step(&self, state: &WorldState, action: [f32; 2]) -> Step {
        let mut next = *state;
        for (d, &raw) in action.iter().enumerate() {
            let a = if raw.is_nan() {
                0.0
            } else {
                raw.clamp(-1.0, 1.0)
            };
            next.agent[d] = (state.agent[d] + self.config.step_size * a).clamp(0.0, 1.0);
        }
        next.step = state.step + 1;
        let done = next.distance() <= self.config.success_radius;
        let truncated = !done && next.step >= self.config.max_steps;
        Step {
            obs: self.observe(&next),
            state: next,
            reward: if done { 1.0 } else { 0.0 },
            done,
            truncated,
        }
    }

    /// Maximal straight-line progress toward the target.
    pub fn expert_action(&self, state: &WorldState) -> [f32; 2] {
        core::array::from_fn(|d| {
            ((state.target[d] - state.agent[d]) / self.config.step_size).clamp(-1.0, 1.0)
        })
    }
}
