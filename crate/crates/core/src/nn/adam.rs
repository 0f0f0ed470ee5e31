use indexmap::IndexMap;

use super::params::{GradMap, ParameterStore};
use crate::autodiff::Tensor;
use crate::container::Container;
use crate::error::{Error, Result};

/// Adam optimizer state with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: IndexMap<String, Tensor>,
    second: IndexMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: IndexMap::new(),
            second: IndexMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }

    pub fn step(&mut self, params: &mut ParameterStore, grads: &GradMap) -> Result<()> {
        // Validate everything before touching any state.
        for name in params.names() {
            let g = grads.get(name).ok_or_else(|| Error::MissingParameter(name.clone()))?;
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let names: Vec<String> = params.names().cloned().collect();
        for name in names {
            let g = &grads[&name];
            let p = params.get_mut(&name)?;
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            for (((pi, mi), vi), gi) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *pi -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            if !p.is_finite() {
                return Err(Error::Numerical(format!("parameter `{name}` became non-finite")));
            }
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str, into: &mut Container) {
        into.insert(format!("{prefix}step"), Tensor::scalar(self.step as f64));
        into.insert(format!("{prefix}lr"), Tensor::scalar(self.lr));
        for (k, m) in &self.first {
            into.insert(format!("{prefix}m/{k}"), m.clone());
        }
        for (k, v) in &self.second {
            into.insert(format!("{prefix}v/{k}"), v.clone());
        }
    }

    pub fn import(from: &Container, prefix: &str) -> Result<Self> {
        let mut adam = Adam::new(from.tensor(&format!("{prefix}lr"))?.item());
        adam.step = from.tensor(&format!("{prefix}step"))?.item() as u64;
        let (mp, vp) = (format!("{prefix}m/"), format!("{prefix}v/"));
        for (k, t) in &from.tensors {
            if let Some(n) = k.strip_prefix(&mp) {
                adam.first.insert(n.to_string(), t.clone());
            } else if let Some(n) = k.strip_prefix(&vp) {
                adam.second.insert(n.to_string(), t.clone());
            }
        }
        Ok(adam)
    }
}
