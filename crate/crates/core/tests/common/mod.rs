#![allow(dead_code)]

use rand::Rng as _;
use rohil_core::learners::{AnchorTargets, Batch};
use rohil_core::nets::{Agent, FrozenAnchor, Linear, NetDims, Params};
use rohil_core::numerics::Tensor;
use rohil_core::rng::{normal_tensor, rng_from};

pub fn tiny_dims() -> NetDims {
    NetDims {
        obs: 6,
        encoder_hidden: 8,
        feature: 5,
        actor_hidden: 6,
        critic_hidden: 6,
        action: 2,
    }
}

/// Random batch whose second half is the anchor sub-batch.
pub fn random_batch(dims: &NetDims, b: usize, seed: u64) -> Batch<f64> {
    let mut rng = rng_from(seed);
    let mut uniform =
        |shape: &[usize], lo: f64, hi: f64| Tensor::from_fn(shape, |_| rng.gen_range(lo..hi));
    let obs = uniform(&[b, dims.obs], 0.0, 1.0);
    let next_obs = uniform(&[b, dims.obs], 0.0, 1.0);
    let actions = uniform(&[b, dims.action], -0.95, 0.95);
    let rewards = Tensor::from_fn(&[b, 1], |i| (i % 3 == 0) as u8 as f64);
    let not_done = Tensor::from_fn(&[b, 1], |i| (i % 4 != 1) as u8 as f64);
    let anchor_mask = Tensor::from_fn(&[b, 1], |i| (i >= b / 2) as u8 as f64);
    let mut rng = rng_from(seed ^ 0x5EED);
    Batch {
        obs,
        next_obs,
        actions,
        rewards,
        not_done,
        anchor_mask,
        next_noise: normal_tensor(&mut rng, b, dims.action),
        noise: normal_tensor(&mut rng, b, dims.action),
    }
}

pub fn anchor_targets(anchor: &Agent<f64>, batch: &Batch<f64>) -> AnchorTargets<f64> {
    AnchorTargets::compute(&FrozenAnchor::freeze(anchor), &batch.obs).unwrap()
}

pub fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|e| e.max(0.0)).collect()
}

pub fn dense(l: &Linear<f64>, x: &[f64]) -> Vec<f64> {
    let (inputs, outputs) = (l.weight.shape()[0], l.weight.shape()[1]);
    assert_eq!(x.len(), inputs);
    (0..outputs)
        .map(|o| {
            l.bias.data()[o]
                + (0..inputs)
                    .map(|i| x[i] * l.weight.data()[i * outputs + o])
                    .sum::<f64>()
        })
        .collect()
}

pub fn flatten<P: Params<f64>>(p: &P) -> Vec<f64> {
    p.named("")
        .iter()
        .flat_map(|(_, t)| t.data().to_vec())
        .collect()
}

pub fn unflatten<P: Params<f64>>(p: &mut P, flat: &[f64]) {
    let mut at = 0;
    for t in p.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
    assert_eq!(at, flat.len());
}
