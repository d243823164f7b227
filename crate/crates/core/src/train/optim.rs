//! Adam with a per-epoch cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::params::ParameterSet;

pub const ADAM_BETA1: f32 = 0.9;
pub const ADAM_BETA2: f32 = 0.999;
pub const ADAM_EPS: f32 = 1e-8;

/// `base * (1 + cos(pi * epoch / total)) / 2`, epochs counted from 0.
pub fn cosine_lr(base: f32, epoch: usize, total: usize) -> f32 {
    let t = epoch as f64 / total.max(1) as f64;
    (base as f64 * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())) as f32
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: ParameterSet,
    v: ParameterSet,
    step: i32,
}

impl Adam {
    pub fn new(params: &ParameterSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One bias-corrected update, parameters visited in name order.
    pub fn update(&mut self, params: &mut ParameterSet, grads: &ParameterSet, lr: f32) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Spec(format!("no gradient for '{name}'")))?;
            let m = self.m.get_mut(name).expect("moments mirror params");
            let m = m.data_mut();
            let v = self.v.get_mut(name).expect("moments mirror params").data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * gi;
                *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}
