//! Adaptive moment estimation over a [`ParamSet`].

use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use super::graph::{GradStore, Var};
use super::ParamSet;

/// Adam with bias correction. State is aligned with the parameter set it
/// was created for.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let m = params.tensors().map(|t| vec![0.0; t.numel()]).collect();
        let v = params.tensors().map(|t| vec![0.0; t.numel()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m,
            v,
        }
    }

    /// One update step. `vars[i]` must be the leaf this step used for
    /// parameter `i`; parameters without a gradient are left unchanged.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradStore, vars: &[Var]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, var) in vars.iter().enumerate() {
            let Some(g) = grads.grad(*var) else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = &mut params.tensor_mut(i).data;
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
