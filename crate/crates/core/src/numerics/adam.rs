use alloc::string::String;
use alloc::vec::Vec;

use super::{Real, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

struct Moments<T> {
    name: String,
    m: Tensor<T>,
    v: Tensor<T>,
}

/// Bias-corrected Adam over a fixed, named list of parameter tensors.
pub struct Adam<T> {
    config: AdamConfig,
    step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new<'p>(
        config: AdamConfig,
        params: impl IntoIterator<Item = (String, &'p Tensor<T>)>,
    ) -> Self {
        let moments = params
            .into_iter()
            .map(|(name, p)| Moments {
                name,
                m: Tensor::zeros(p.shape()),
                v: Tensor::zeros(p.shape()),
            })
            .collect();
        Self {
            config,
            step: 0,
            moments,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of `params` in place; grads are matched positionally.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.moments.len() || grads.len() != self.moments.len() {
            return Err(Error::Parameters(alloc::format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.moments.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((mo, p), g) in self.moments.iter().zip(params.iter()).zip(grads) {
            if p.shape() != mo.m.shape() || g.shape() != mo.m.shape() {
                return Err(Error::Parameters(alloc::format!(
                    "`{}`: moment {:?}, param {:?}, grad {:?}",
                    mo.name,
                    mo.m.shape(),
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    param: mo.name.clone(),
                });
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        let (lr, eps) = (T::of(c.lr), T::of(c.eps));
        for ((mo, p), g) in self.moments.iter_mut().zip(params.iter_mut()).zip(grads) {
            let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
            let lanes = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()));
            for ((pv, &gv), (mk, vk)) in lanes {
                *mk = b1 * *mk + (T::one() - b1) * gv;
                *vk = b2 * *vk + (T::one() - b2) * gv * gv;
                let m_hat = *mk / bc1;
                let v_hat = *vk / bc2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
