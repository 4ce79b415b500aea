//! Adam optimizer over a [`ParamStore`].

use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::DenseTensor;

use super::tape::ParamStore;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment per parameter plus the step counter.
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<DenseTensor>,
    v: Vec<DenseTensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, cfg: AdamConfig) -> Self {
        let m = store
            .tensors()
            .iter()
            .map(|t| DenseTensor::zeros(t.shape()))
            .collect();
        let v = store
            .tensors()
            .iter()
            .map(|t| DenseTensor::zeros(t.shape()))
            .collect();
        Self {
            cfg,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update. `clip`, when set, rescales the whole gradient so its
    /// global L2 norm does not exceed the limit.
    pub fn step(
        &mut self,
        store: &mut ParamStore,
        grads: &[DenseTensor],
        clip: Option<f64>,
    ) -> Result<()> {
        if grads.len() != store.len() {
            return Err(CoreError::InvalidArgument {
                op: "AdamState::step",
                message: alloc::format!(
                    "{} gradients for {} parameters",
                    grads.len(),
                    store.len()
                ),
            });
        }
        for (g, t) in grads.iter().zip(store.tensors().iter()) {
            if g.shape() != t.shape() {
                return Err(CoreError::ShapeMismatch {
                    op: "AdamState::step",
                    expected: crate::error::shape_string(t.shape()),
                    got: crate::error::shape_string(g.shape()),
                    mode: None,
                });
            }
        }
        let mut scale = 1.0;
        if let Some(limit) = clip {
            let norm_sq: f64 = grads
                .iter()
                .flat_map(|g| g.data().iter())
                .map(|g| g * g)
                .sum();
            let norm = libm::sqrt(norm_sq);
            if norm > limit {
                scale = limit / norm;
            }
        }

        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - libm::pow(self.cfg.beta1, t);
        let bc2 = 1.0 - libm::pow(self.cfg.beta2, t);
        for (p, grad) in grads.iter().enumerate() {
            let m = &mut self.m[p];
            let v = &mut self.v[p];
            let param = &mut store.tensors_mut()[p];
            for k in 0..grad.len() {
                let g = grad.data()[k] * scale;
                let mk = self.cfg.beta1 * m.data()[k] + (1.0 - self.cfg.beta1) * g;
                let vk = self.cfg.beta2 * v.data()[k] + (1.0 - self.cfg.beta2) * g * g;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let m_hat = mk / bc1;
                let v_hat = vk / bc2;
                param.data_mut()[k] -= self.cfg.lr * m_hat / (libm::sqrt(v_hat) + self.cfg.epsilon);
            }
        }
        Ok(())
    }
}
