//! Agent parameter containers and their forward heads.
//!
//! One encoder feeds both the actor and the twin critics. The encoder is
//! trained by the critic loss only; the actor reads its output through a
//! stop-gradient.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng as _;

use crate::litworld::{Observation, ACTION_DIM, IMAGE_BYTES, PROPRIO_DIM};
use crate::numerics::{Real, Tape, Tensor, Var};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Result};

pub const OBS_DIM: usize = IMAGE_BYTES + PROPRIO_DIM;
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const SQUASH_EPS: f64 = 1e-6;

/// Layer widths. The defaults are the production agent; tests shrink them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetDims {
    pub obs: usize,
    pub encoder_hidden: usize,
    pub feature: usize,
    pub actor_hidden: usize,
    pub critic_hidden: usize,
    pub action: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            obs: OBS_DIM,
            encoder_hidden: 128,
            feature: 64,
            actor_hidden: 64,
            critic_hidden: 64,
            action: ACTION_DIM,
        }
    }
}

/// Named parameter tensors in a fixed order.
pub trait Params<T: Real> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>);
    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>);

    fn named(&self, prefix: &str) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit(prefix, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        self.visit_mut(&mut out);
        out
    }

    fn parameter_count(&self) -> usize {
        self.named("").iter().map(|(_, t)| t.len()).sum()
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

/// How a container's tensors enter a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    /// Leaves that receive gradients.
    Trainable,
    /// Leaves whose uses pass through a stop-gradient.
    Detached,
    /// Plain constants; no gradient bookkeeping.
    Constant,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T> {
    /// `[in, out]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Real> Linear<T> {
    /// Uniform in `±1/√in` for weights and biases.
    pub fn init(inputs: usize, outputs: usize, rng: &mut crate::rng::Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |_| T::of(rng.gen_range(-bound..bound));
        Self {
            weight: Tensor::from_fn(&[inputs, outputs], &mut draw),
            bias: Tensor::from_fn(&[outputs], &mut draw),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>, binding: Binding) -> Result<LinearVars> {
        let bind_one = |tape: &mut Tape<'a, T>, t: &'a Tensor<T>| -> Result<(Var, Var)> {
            Ok(match binding {
                Binding::Trainable => {
                    let v = tape.param(t)?;
                    (v, v)
                }
                Binding::Detached => {
                    let leaf = tape.param(t)?;
                    (leaf, tape.stop_gradient(leaf))
                }
                Binding::Constant => {
                    let v = tape.constant_ref(t)?;
                    (v, v)
                }
            })
        };
        let (weight_leaf, weight) = bind_one(tape, &self.weight)?;
        let (bias_leaf, bias) = bind_one(tape, &self.bias)?;
        Ok(LinearVars {
            weight,
            bias,
            leaves: [weight_leaf, bias_leaf],
        })
    }

    /// Straight-line `x · W + b` for one input row.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let (inputs, outputs) = self.weight.dims2().unwrap();
        assert_eq!(x.len(), inputs);
        (0..outputs)
            .map(|o| {
                x.iter()
                    .enumerate()
                    .fold(self.bias.data()[o], |acc, (i, &xi)| {
                        acc + xi * self.weight.at(i, o)
                    })
            })
            .collect()
    }
}

impl<T: Real> Params<T> for Linear<T> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
    /// The registered leaves (differs from `weight`/`bias` when detached).
    pub leaves: [Var; 2],
}

impl LinearVars {
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        tape.affine(x, self.weight, self.bias)
    }

    /// Same values, read-only: uses pass through a stop-gradient.
    pub fn detach<T: Real>(&self, tape: &mut Tape<'_, T>) -> LinearVars {
        LinearVars {
            weight: tape.stop_gradient(self.weight),
            bias: tape.stop_gradient(self.bias),
            leaves: self.leaves,
        }
    }
}

fn relu_row<T: Real>(v: Vec<T>) -> Vec<T> {
    v.into_iter()
        .map(|e| if e > T::zero() { e } else { T::zero() })
        .collect()
}

/// φ: flattened image and proprio → hidden (relu) → feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub hidden: LinearVars,
    pub out: LinearVars,
}

impl<T: Real> Encoder<T> {
    pub fn init(dims: &NetDims, rng: &mut crate::rng::Rng) -> Self {
        Self {
            hidden: Linear::init(dims.obs, dims.encoder_hidden, rng),
            out: Linear::init(dims.encoder_hidden, dims.feature, rng),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>, binding: Binding) -> Result<EncoderVars> {
        Ok(EncoderVars {
            hidden: self.hidden.bind(tape, binding)?,
            out: self.out.bind(tape, binding)?,
        })
    }

    /// Feature vector for one observation.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<T>> {
        let row = obs_row::<T>(obs)?;
        self.encode_row(&row)
    }

    pub fn encode_row(&self, row: &[T]) -> Result<Vec<T>> {
        let x = Tensor::new(&[1, row.len()], row.to_vec())?;
        let mut tape = Tape::new();
        let xv = tape.constant(x)?;
        let vars = self.bind(&mut tape, Binding::Constant)?;
        let f = vars.forward(&mut tape, xv)?;
        Ok(tape.value(f).data().to_vec())
    }
}

impl EncoderVars {
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, obs: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, obs)?;
        let h = tape.relu(h)?;
        self.out.forward(tape, h)
    }

    pub fn leaves(&self) -> Vec<Var> {
        let mut v = self.hidden.leaves.to_vec();
        v.extend(self.out.leaves);
        v
    }
}

impl<T: Real> Params<T> for Encoder<T> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>) {
        self.hidden.visit(&join(prefix, "hidden"), out);
        self.out.visit(&join(prefix, "out"), out);
    }

    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>) {
        self.hidden.visit_mut(out);
        self.out.visit_mut(out);
    }
}

/// Flattened image followed by proprio. Pixels are scaled to `[0, 1]` and
/// then centered by −0.5; the offset is absorbable by the first-layer bias.
pub fn obs_row<T: Real>(obs: &Observation) -> Result<Vec<T>> {
    if obs.image.len() != IMAGE_BYTES {
        return Err(Error::Shape {
            op: "encode",
            detail: format!(
                "image has {} bytes, expected {IMAGE_BYTES} (16 × 16 × 3)",
                obs.image.len()
            ),
        });
    }
    let mut row = Vec::with_capacity(OBS_DIM);
    write_obs_row(obs, &mut row);
    Ok(row)
}

pub(crate) fn write_obs_row<T: Real>(obs: &Observation, out: &mut Vec<T>) {
    let inv = T::of(1.0 / 255.0);
    out.extend(
        obs.image
            .iter()
            .map(|&b| T::of(b as f64) * inv - T::of(0.5)),
    );
    out.extend(obs.proprio.iter().map(|&p| T::of(p as f64)));
}

/// Squashed diagonal-Gaussian policy head.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor<T> {
    pub hidden: Linear<T>,
    pub mean: Linear<T>,
    pub log_std: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct ActorVars {
    pub hidden: LinearVars,
    pub mean: LinearVars,
    pub log_std: LinearVars,
}

/// Maps an unbounded head output into `[LOG_STD_MIN, LOG_STD_MAX]` smoothly.
pub fn bound_log_std<T: Real>(raw: T) -> T {
    let half = T::of(0.5 * (LOG_STD_MAX - LOG_STD_MIN));
    T::of(LOG_STD_MIN) + half * (raw.tanh() + T::one())
}

impl<T: Real> Actor<T> {
    pub fn init(dims: &NetDims, rng: &mut crate::rng::Rng) -> Self {
        Self {
            hidden: Linear::init(dims.feature, dims.actor_hidden, rng),
            mean: Linear::init(dims.actor_hidden, dims.action, rng),
            log_std: Linear::init(dims.actor_hidden, dims.action, rng),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>, binding: Binding) -> Result<ActorVars> {
        Ok(ActorVars {
            hidden: self.hidden.bind(tape, binding)?,
            mean: self.mean.bind(tape, binding)?,
            log_std: self.log_std.bind(tape, binding)?,
        })
    }

    /// Straight-line `(μ, log σ)` for one feature vector.
    pub fn head(&self, feature: &[T]) -> (Vec<T>, Vec<T>) {
        let h = relu_row(self.hidden.apply(feature));
        let mean = self.mean.apply(&h);
        let log_std = self
            .log_std
            .apply(&h)
            .into_iter()
            .map(bound_log_std)
            .collect();
        (mean, log_std)
    }
}

impl ActorVars {
    /// `(μ, log σ)`, each `[n, action]`; log σ already bounded.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, feature: Var) -> Result<(Var, Var)> {
        let h = self.hidden.forward(tape, feature)?;
        let h = tape.relu(h)?;
        let mean = self.mean.forward(tape, h)?;
        let raw = self.log_std.forward(tape, h)?;
        let squashed = tape.tanh(raw)?;
        let half = T::of(0.5 * (LOG_STD_MAX - LOG_STD_MIN));
        let scaled = tape.scale(squashed, half)?;
        let log_std = tape.shift(scaled, T::of(LOG_STD_MIN) + half)?;
        Ok((mean, log_std))
    }

    pub fn leaves(&self) -> Vec<Var> {
        let mut v = self.hidden.leaves.to_vec();
        v.extend(self.mean.leaves);
        v.extend(self.log_std.leaves);
        v
    }
}

impl<T: Real> Params<T> for Actor<T> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>) {
        self.hidden.visit(&join(prefix, "hidden"), out);
        self.mean.visit(&join(prefix, "mean"), out);
        self.log_std.visit(&join(prefix, "log_std"), out);
    }

    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>) {
        self.hidden.visit_mut(out);
        self.mean.visit_mut(out);
        self.log_std.visit_mut(out);
    }
}

/// `a = tanh(μ + σ·ξ)` and its log-density including the tanh correction.
pub fn sample_squashed<T: Real>(mean: &[T], log_std: &[T], noise: &[T]) -> (Vec<T>, T) {
    let half_log_2pi = T::of(0.5 * (2.0 * core::f64::consts::PI).ln());
    let mut action = Vec::with_capacity(mean.len());
    let mut log_prob = T::zero();
    for d in 0..mean.len() {
        let a = (mean[d] + log_std[d].exp() * noise[d]).tanh();
        log_prob = log_prob
            - half_log_2pi
            - log_std[d]
            - T::of(0.5) * noise[d] * noise[d]
            - (T::one() + T::of(SQUASH_EPS) - a * a).ln();
        action.push(a);
    }
    (action, log_prob)
}

/// Tape version of [`sample_squashed`]: `(a [n, A], log π [n, 1])`.
pub fn sample_squashed_on_tape<T: Real>(
    tape: &mut Tape<'_, T>,
    mean: Var,
    log_std: Var,
    noise: &Tensor<T>,
) -> Result<(Var, Var)> {
    let noise_v = tape.constant(noise.clone())?;
    let std = tape.exp(log_std)?;
    let spread = tape.mul(std, noise_v)?;
    let pre = tape.add(mean, spread)?;
    let action = tape.tanh(pre)?;
    let half_log_2pi = T::of(0.5 * (2.0 * core::f64::consts::PI).ln());
    let base = tape.constant(noise.map(|z| -half_log_2pi - T::of(0.5) * z * z))?;
    let gauss = tape.sub(base, log_std)?;
    let sq = tape.square(action)?;
    let neg = tape.scale(sq, -T::one())?;
    let inner = tape.shift(neg, T::one() + T::of(SQUASH_EPS))?;
    let correction = tape.log(inner)?;
    let per_dim = tape.sub(gauss, correction)?;
    let log_prob = tape.row_sum(per_dim)?;
    Ok((action, log_prob))
}

/// `D_KL(N(μ₀, σ₀²) ‖ N(μ, σ²))` summed over independent dimensions.
pub fn kl_diag_gauss<T: Real>(mu0: &[T], sigma0: &[T], mu: &[T], sigma: &[T]) -> Result<T> {
    let mut kl = T::zero();
    for d in 0..mu.len() {
        if !(sigma0[d] > T::zero() && sigma[d] > T::zero()) {
            let bad = if sigma0[d] > T::zero() {
                sigma[d]
            } else {
                sigma0[d]
            };
            return Err(Error::OutOfRange {
                what: "gaussian scale",
                value: bad.as_f64(),
            });
        }
        let diff = mu0[d] - mu[d];
        kl = kl
            + (sigma[d] / sigma0[d]).ln()
            + (sigma0[d] * sigma0[d] + diff * diff) / (T::of(2.0) * sigma[d] * sigma[d])
            - T::of(0.5);
    }
    Ok(kl)
}

/// Tape version in log-σ parameterization; `[n, A]` inputs, `[n, 1]` output.
/// The reference distribution enters as constants.
pub fn kl_diag_gauss_on_tape<T: Real>(
    tape: &mut Tape<'_, T>,
    mean0: &Tensor<T>,
    log_std0: &Tensor<T>,
    mean: Var,
    log_std: Var,
) -> Result<Var> {
    let m0 = tape.constant(mean0.clone())?;
    let ls0 = tape.constant(log_std0.clone())?;
    // σ₀²/σ² as exp(−2·log(σ/σ₀)) is exactly 1 at σ = σ₀
    let log_ratio = tape.sub(log_std, ls0)?;
    let neg2_ratio = tape.scale(log_ratio, T::of(-2.0))?;
    let var_ratio = tape.exp(neg2_ratio)?;
    let diff = tape.sub(m0, mean)?;
    let diff_sq = tape.square(diff)?;
    let neg2 = tape.scale(log_std, T::of(-2.0))?;
    let inv_var = tape.exp(neg2)?;
    let mean_term = tape.mul(diff_sq, inv_var)?;
    let ratio = tape.add(var_ratio, mean_term)?;
    let half = tape.scale(ratio, T::of(0.5))?;
    let sum = tape.add(log_ratio, half)?;
    let per_dim = tape.shift(sum, T::of(-0.5))?;
    tape.row_sum(per_dim)
}

/// Q: feature ⊕ action → hidden (relu) → scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic<T> {
    pub hidden: Linear<T>,
    pub out: Linear<T>,
}

#[derive(Clone, Debug)]
pub struct CriticVars {
    pub hidden: LinearVars,
    pub out: LinearVars,
}

impl<T: Real> Critic<T> {
    pub fn init(dims: &NetDims, rng: &mut crate::rng::Rng) -> Self {
        Self {
            hidden: Linear::init(dims.feature + dims.action, dims.critic_hidden, rng),
            out: Linear::init(dims.critic_hidden, 1, rng),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a, T>, binding: Binding) -> Result<CriticVars> {
        Ok(CriticVars {
            hidden: self.hidden.bind(tape, binding)?,
            out: self.out.bind(tape, binding)?,
        })
    }

    /// Straight-line Q for one `(feature, action)` pair.
    pub fn q(&self, feature: &[T], action: &[T]) -> T {
        let mut x = feature.to_vec();
        x.extend_from_slice(action);
        let h = relu_row(self.hidden.apply(&x));
        self.out.apply(&h)[0]
    }
}

impl CriticVars {
    pub fn detach<T: Real>(&self, tape: &mut Tape<'_, T>) -> CriticVars {
        CriticVars {
            hidden: self.hidden.detach(tape),
            out: self.out.detach(tape),
        }
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<'_, T>,
        feature: Var,
        action: Var,
    ) -> Result<Var> {
        let x = tape.concat(feature, action)?;
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h)?;
        self.out.forward(tape, h)
    }

    pub fn leaves(&self) -> Vec<Var> {
        let mut v = self.hidden.leaves.to_vec();
        v.extend(self.out.leaves);
        v
    }
}

impl<T: Real> Params<T> for Critic<T> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>) {
        self.hidden.visit(&join(prefix, "hidden"), out);
        self.out.visit(&join(prefix, "out"), out);
    }

    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>) {
        self.hidden.visit_mut(out);
        self.out.visit_mut(out);
    }
}

/// Twin critic heads on a shared feature.
pub fn q_values<T: Real>(critics: &[Critic<T>; 2], feature: &[T], action: &[T]) -> (T, T) {
    (critics[0].q(feature, action), critics[1].q(feature, action))
}

/// `target ← τ·online + (1 − τ)·target`, elementwise.
pub fn polyak_update<T: Real, P: Params<T>>(target: &mut P, online: &P, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::OutOfRange {
            what: "polyak tau",
            value: tau,
        });
    }
    let online = online.named("");
    let mut targets = target.tensors_mut();
    if online.len() != targets.len() {
        return Err(Error::Parameters(format!(
            "{} online vs {} target tensors",
            online.len(),
            targets.len()
        )));
    }
    let rate = T::of(tau);
    for ((name, src), dst) in online.iter().zip(targets.iter_mut()) {
        if src.shape() != dst.shape() {
            return Err(Error::Parameters(format!(
                "`{name}`: {:?} vs {:?}",
                src.shape(),
                dst.shape()
            )));
        }
        if tau == 1.0 {
            dst.data_mut().copy_from_slice(src.data());
            continue;
        }
        // incremental form: a target equal to its online copy stays bit-equal
        for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = *d + rate * (s - *d);
        }
    }
    Ok(())
}

/// Encoder, actor, twin critics and their lagged targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent<T> {
    pub dims: NetDims,
    pub encoder: Encoder<T>,
    pub actor: Actor<T>,
    pub critics: [Critic<T>; 2],
    pub targets: [Critic<T>; 2],
}

impl<T: Real> Agent<T> {
    pub fn new(dims: NetDims, seed: u64) -> Self {
        let mut rng = rng_from(derive_seed(seed, 0xA6E7));
        let encoder = Encoder::init(&dims, &mut rng);
        let actor = Actor::init(&dims, &mut rng);
        let critics = [Critic::init(&dims, &mut rng), Critic::init(&dims, &mut rng)];
        let targets = critics.clone();
        Self {
            dims,
            encoder,
            actor,
            critics,
            targets,
        }
    }

    /// Deterministic action `tanh(μ)`.
    pub fn act_mean(&self, obs: &Observation) -> Result<[f32; 2]> {
        let feature = self.encoder.encode(obs)?;
        let (mean, _) = self.actor.head(&feature);
        Ok([
            mean[0].tanh().as_f64() as f32,
            mean[1].tanh().as_f64() as f32,
        ])
    }

    /// Stochastic action from standard-normal `noise`.
    pub fn act_sample(&self, obs: &Observation, noise: [T; 2]) -> Result<[f32; 2]> {
        let feature = self.encoder.encode(obs)?;
        let (mean, log_std) = self.actor.head(&feature);
        let (a, _) = sample_squashed(&mean, &log_std, &noise);
        Ok([a[0].as_f64() as f32, a[1].as_f64() as f32])
    }

    /// FNV-1a over names, extents and element bits of every tensor.
    pub fn checksum(&self) -> u64 {
        checksum_of(&self.named(""))
    }

    pub fn cast<U: Real>(&self) -> Agent<U> {
        let lin = |l: &Linear<T>| Linear {
            weight: l.weight.cast(),
            bias: l.bias.cast(),
        };
        let critic = |c: &Critic<T>| Critic {
            hidden: lin(&c.hidden),
            out: lin(&c.out),
        };
        Agent {
            dims: self.dims,
            encoder: Encoder {
                hidden: lin(&self.encoder.hidden),
                out: lin(&self.encoder.out),
            },
            actor: Actor {
                hidden: lin(&self.actor.hidden),
                mean: lin(&self.actor.mean),
                log_std: lin(&self.actor.log_std),
            },
            critics: [critic(&self.critics[0]), critic(&self.critics[1])],
            targets: [critic(&self.targets[0]), critic(&self.targets[1])],
        }
    }

    /// Overwrite every tensor from a name → tensor lookup.
    pub fn load_named<'t>(
        &mut self,
        mut lookup: impl FnMut(&str) -> Option<&'t Tensor<T>>,
    ) -> Result<()> {
        let names: Vec<String> = self.named("").into_iter().map(|(n, _)| n).collect();
        let mut slots = self.tensors_mut();
        for (name, slot) in names.iter().zip(slots.iter_mut()) {
            let src =
                lookup(name).ok_or_else(|| Error::Parameters(format!("missing array `{name}`")))?;
            if src.shape() != slot.shape() {
                return Err(Error::Parameters(format!(
                    "`{name}` has extents {:?}, expected {:?}",
                    src.shape(),
                    slot.shape()
                )));
            }
            **slot = src.clone();
        }
        Ok(())
    }
}

pub(crate) fn checksum_of<T: Real>(tensors: &[(String, &Tensor<T>)]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for (name, t) in tensors {
        feed(name.as_bytes());
        for &d in t.shape() {
            feed(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            feed(&v.as_f64().to_bits().to_le_bytes());
        }
    }
    h
}

impl<T: Real> Params<T> for Agent<T> {
    fn visit<'s>(&'s self, prefix: &str, out: &mut Vec<(String, &'s Tensor<T>)>) {
        self.encoder.visit(&join(prefix, "encoder"), out);
        self.actor.visit(&join(prefix, "actor"), out);
        self.critics[0].visit(&join(prefix, "critic1"), out);
        self.critics[1].visit(&join(prefix, "critic2"), out);
        self.targets[0].visit(&join(prefix, "target1"), out);
        self.targets[1].visit(&join(prefix, "target2"), out);
    }

    fn visit_mut<'s>(&'s mut self, out: &mut Vec<&'s mut Tensor<T>>) {
        self.encoder.visit_mut(out);
        self.actor.visit_mut(out);
        let [c1, c2] = &mut self.critics;
        c1.visit_mut(out);
        c2.visit_mut(out);
        let [t1, t2] = &mut self.targets;
        t1.visit_mut(out);
        t2.visit_mut(out);
    }
}

/// Bit-exact, immutable snapshot θ₀ of encoder, actor and critics.
#[derive(Clone, Debug)]
pub struct FrozenAnchor<T> {
    encoder: Encoder<T>,
    actor: Actor<T>,
    critics: [Critic<T>; 2],
    checksum: u64,
}

impl<T: Real> FrozenAnchor<T> {
    pub fn freeze(agent: &Agent<T>) -> Self {
        let mut anchor = Self {
            encoder: agent.encoder.clone(),
            actor: agent.actor.clone(),
            critics: agent.critics.clone(),
            checksum: 0,
        };
        anchor.checksum = anchor.compute_checksum();
        anchor
    }

    pub fn encoder(&self) -> &Encoder<T> {
        &self.encoder
    }

    pub fn actor(&self) -> &Actor<T> {
        &self.actor
    }

    pub fn critics(&self) -> &[Critic<T>; 2] {
        &self.critics
    }

    /// Checksum recorded at freeze time.
    pub fn checksum(&self) -> u64 {
        self.checksum
    }

    pub fn compute_checksum(&self) -> u64 {
        let mut named = self.encoder.named("encoder");
        named.extend(self.actor.named("actor"));
        named.extend(self.critics[0].named("critic1"));
        named.extend(self.critics[1].named("critic2"));
        checksum_of(&named)
    }

    /// True while the stored parameters still hash to the freeze-time value.
    pub fn verify(&self) -> bool {
        self.compute_checksum() == self.checksum
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut named = self.encoder.named("encoder");
        named.extend(self.actor.named("actor"));
        named.extend(self.critics[0].named("critic1"));
        named.extend(self.critics[1].named("critic2"));
        named
    }
}
