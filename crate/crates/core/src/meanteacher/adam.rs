use crate::error::{config_err, Result};
use crate::tensor::{Param, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for an ordered list of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// Applies one update and zeroes the gradients. Returns `false` without
    /// touching parameters or moments when any gradient is non-finite.
    pub fn step(&mut self, params: &mut [(String, &mut Param<f32>)], lr: f64) -> Result<bool> {
        if params.len() != self.m.len() {
            return Err(config_err!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            ));
        }
        if let Some((name, _)) = params.iter().find(|(_, p)| !p.grad.all_finite()) {
            log::warn!("non-finite gradient in {name}; step skipped");
            params.iter_mut().for_each(|(_, p)| p.zero_grad());
            return Ok(false);
        }
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for (i, (name, p)) in params.iter_mut().enumerate() {
            if self.m[i].shape() != p.value.shape() {
                return Err(config_err!("optimizer state shape mismatch for {name}"));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let Param { value, grad } = &mut **p;
            for (((w, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = g as f64;
                let m1 = beta1 * *mi as f64 + (1.0 - beta1) * g;
                let v1 = beta2 * *vi as f64 + (1.0 - beta2) * g * g;
                *mi = m1 as f32;
                *vi = v1 as f32;
                let update = lr * (m1 / bc1) / ((v1 / bc2).sqrt() + epsilon);
                *w = (*w as f64 - update) as f32;
            }
            p.zero_grad();
        }
        Ok(true)
    }
}
