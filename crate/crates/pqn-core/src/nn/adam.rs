use serde::{Deserialize, Serialize};

use crate::nn::param::{ParamId, ParamStore};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for a fixed group of parameters in a store.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    params: Vec<ParamId>,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, params: Vec<ParamId>, config: AdamConfig) -> Self {
        let zeros = |id: &ParamId| vec![T::zero(); store.get(*id).len()];
        Self {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            params,
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }
}

/// Bias-corrected Adam update of the group's parameters; clears their gradients.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, adam: &mut AdamState<T>) {
    adam.step += 1;
    let cfg = adam.config;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let t = adam.step as i32;
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for (slot, &id) in adam.params.iter().enumerate() {
        let p = store.get_mut(id);
        let (m, v) = (&mut adam.m[slot], &mut adam.v[slot]);
        for i in 0..p.values.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (T::one() - b1) * g;
            v[i] = b2 * v[i] + (T::one() - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.values[i] = p.values[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
}
