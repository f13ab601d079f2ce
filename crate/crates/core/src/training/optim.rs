use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerFamily {
    /// Adam with decoupled weight decay.
    AdamW,
    /// Adam; `weight_decay` is added to the gradient as L2.
    Adam,
}

/// Adam / AdamW with bias correction.
#[derive(Debug, Clone)]
pub struct Optimizer {
    family: OptimizerFamily,
    learning_rate: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    first: Vec<Option<Matrix>>,
    second: Vec<Option<Matrix>>,
}

impl Optimizer {
    pub fn new(family: OptimizerFamily, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            family,
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One update. Parameters without a gradient or marked frozen are left
    /// untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        if self.first.len() < params.len() {
            self.first.resize(params.len(), None);
            self.second.resize(params.len(), None);
        }
        self.step += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let bc2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            if params.is_frozen(id) {
                continue;
            }
            let i = id.index();
            let (rows, cols) = g.shape();
            let m = self.first[i].get_or_insert_with(|| Matrix::zeros(rows, cols));
            let v = self.second[i].get_or_insert_with(|| Matrix::zeros(rows, cols));
            let p = params.value_mut(id);
            let l2 = match self.family {
                OptimizerFamily::Adam if self.weight_decay != 0.0 => self.weight_decay,
                _ => 0.0,
            };
            let decoupled = match self.family {
                OptimizerFamily::AdamW if self.weight_decay != 0.0 => self.weight_decay,
                _ => 0.0,
            };
            for (((w, &gr), mk), vk) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let gr = if l2 != 0.0 { gr + l2 * *w } else { gr };
                *mk = self.beta1 * *mk + (1.0 - self.beta1) * gr;
                *vk = self.beta2 * *vk + (1.0 - self.beta2) * gr * gr;
                let update = (*mk / bc1) / (libm::sqrt(*vk / bc2) + self.eps);
                if decoupled != 0.0 {
                    *w -= self.learning_rate * (update + decoupled * *w);
                } else {
                    *w -= self.learning_rate * update;
                }
            }
        }
    }
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
