//! Adam with bias correction, keyed by parameter name so state survives the
//! copy-on-update parameter tensors.

use std::collections::HashMap;

use crate::error::Result;
use crate::model::ParamSet;
use crate::tensor::Tensor;

pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

impl Adam {
    pub fn new() -> Self {
        Adam::with_hyperparams(0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparams(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, t: 0, m: HashMap::new(), v: HashMap::new() }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// First/second moment for one parameter, if the name has been stepped.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        match (self.m.get(name), self.v.get(name)) {
            (Some(m), Some(v)) => Some((m, v)),
            _ => None,
        }
    }

    /// Rebuild from checkpointed state.
    pub fn from_state(t: u64, m: HashMap<String, Vec<f64>>, v: HashMap<String, Vec<f64>>) -> Self {
        Adam { t, m, v, ..Adam::new() }
    }

    /// Consume the accumulated gradients and update every parameter in
    /// place. Parameters that received no gradient this step decay their
    /// moments toward zero, matching a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet, lr: f64) -> Result<()> {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let names: Vec<String> = params.names().map(String::from).collect();
        for name in names {
            let cur = params.get(&name)?;
            let n = cur.numel();
            let g = cur.take_grad().unwrap_or_else(|| vec![0.0; n]);
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                out.push(cur.data()[i] - lr * m_hat / (v_hat.sqrt() + self.eps));
            }
            params.replace(&name, Tensor::param(cur.shape(), out)?)?;
        }
        Ok(())
    }
}
