use serde::{Deserialize, Serialize};

use super::{ParamStore, Result, Tensor, TensorError};

/// Adam hyper-parameters; the defaults are the training setup used for all
/// shapes-dataset models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Adam with bias-corrected moments, one buffer pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        Self {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Restores optimiser state saved from an earlier run.
    pub fn restore(&mut self, t: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Result<()> {
        if m.len() != self.m.len() || v.len() != self.v.len() {
            return Err(TensorError::Dimension(format!(
                "optimiser state covers {} parameters, model has {}",
                m.len(),
                self.m.len()
            )));
        }
        for ((new_m, new_v), old) in m.iter().zip(&v).zip(&self.m) {
            new_m.expect_shape(old.shape())?;
            new_v.expect_shape(old.shape())?;
        }
        self.t = t;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One update of every parameter. A non-finite gradient anywhere rejects
    /// the whole step and leaves parameters and state untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        self.step_scaled(store, grads, None)
    }

    /// Like [`Adam::step`], with the learning rate of parameter `i`
    /// multiplied by `lr_scale[i]`.
    pub fn step_scaled(&mut self, store: &mut ParamStore, grads: &[Tensor], lr_scale: Option<&[f64]>) -> Result<()> {
        if grads.len() != store.len() || lr_scale.is_some_and(|s| s.len() != store.len()) {
            return Err(TensorError::Dimension(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            g.expect_shape(store.get(id).shape())?;
            if !g.is_finite() {
                return Err(TensorError::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (i, id) in store.ids().enumerate() {
            let p = store.get_mut(id).data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let lr = lr * lr_scale.map_or(1.0, |s| s[i]);
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[i].data()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
