use alloc::vec::Vec;

use super::{GroupMask, Matrix, ParamStore};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam over the parameters of one group mask, with its own moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    mask: GroupMask,
    steps: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, mask: GroupMask, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self { config, mask, steps: 0, first: zeros(), second: zeros() }
    }

    pub fn mask(&self) -> GroupMask {
        self.mask
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.first, &self.second)
    }

    /// Restores a saved step count and moment buffers.
    pub fn restore(&mut self, steps: u64, first: Vec<Matrix>, second: Vec<Matrix>) -> Result<()> {
        let ok = |v: &[Matrix]| v.len() == self.first.len() && v.iter().zip(&self.first).all(|(a, b)| a.shape() == b.shape());
        if !ok(&first) || !ok(&second) {
            return Err(Error::Invalid("optimizer state does not match the parameter store".into()));
        }
        self.steps = steps;
        self.first = first;
        self.second = second;
        Ok(())
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Fails when no parameter in the mask received a gradient.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::Invalid("parameter store changed size under the optimizer".into()));
        }
        if !store.any_grad(self.mask) {
            return Err(Error::Invalid("optimizer step with no gradients".into()));
        }
        self.steps += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.steps as f64;
        let c1 = 1.0 - math::exp(t * math::ln(beta1));
        let c2 = 1.0 - math::exp(t * math::ln(beta2));
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let p = store.get_mut(id);
            if !self.mask.contains(p.group) || !p.has_grad {
                continue;
            }
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            for k in 0..p.value.len() {
                let grad = p.grad.data()[k];
                let mk = beta1 * m.data()[k] + (1.0 - beta1) * grad;
                let vk = beta2 * v.data()[k] + (1.0 - beta2) * grad * grad;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                p.value.data_mut()[k] -= lr * (mk / c1) / (math::sqrt(vk / c2) + eps);
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite("adam update"));
            }
        }
        store.zero_grad(self.mask);
        Ok(())
    }
}
