use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use super::unet::UNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// AdamW moments, keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<f32>>,
    pub v: BTreeMap<String, Vec<f32>>,
}

impl OptimState {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One AdamW update of a single tensor using its gradient buffer.
    /// Weight decay scales the parameter directly, outside the adaptive step.
    pub fn update_tensor<T: Real>(&mut self, name: &str, p: &mut Tensor<T>, step: u64) {
        let c = self.config;
        let n = p.len();
        let Some(g) = p.grad.as_ref() else { return };
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
        let bc1 = 1.0 - c.beta1.powi(step as i32);
        let bc2 = 1.0 - c.beta2.powi(step as i32);
        let decay = 1.0 - c.lr * c.weight_decay;
        for i in 0..n {
            let gi = g[i].to_f64();
            let mi = c.beta1 * m[i] as f64 + (1.0 - c.beta1) * gi;
            let vi = c.beta2 * v[i] as f64 + (1.0 - c.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            let pi = p.data[i].to_f64() * decay - c.lr * mhat / (vhat.sqrt() + c.eps);
            p.data[i] = T::from_f64(pi);
        }
    }

    /// Applies one step to every trainable tensor of `net`.
    pub fn step<T: Real>(&mut self, net: &mut UNet<T>) {
        self.step += 1;
        let step = self.step;
        net.visit(&mut |name, t, trainable| {
            if trainable {
                self.update_tensor(&name, t, step);
            }
        });
    }
}
