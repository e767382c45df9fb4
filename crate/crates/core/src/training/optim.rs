use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Linear warmup from zero to `peak`, then cosine decay to zero at `total`.
pub fn lr_schedule(step: usize, total: usize, warmup_fraction: f64, peak: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let step = step.min(total) as f64;
    let total = total as f64;
    let warmup = warmup_fraction * total;
    if step < warmup {
        peak * step / warmup
    } else if warmup >= total {
        peak
    } else {
        let progress = (step - warmup) / (total - warmup);
        0.5 * peak * (1.0 + (PI * progress).cos())
    }
}

/// Euclidean norm of a gradient, accumulated in `f64`.
pub fn global_norm(grad: &[f32]) -> f64 {
    grad.iter()
        .map(|&g| (g as f64) * (g as f64))
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grad` in place so its norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f32], max_norm: f64) -> f64 {
    let norm = global_norm(grad);
    if norm > max_norm {
        let scale = (max_norm / norm) as f32;
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    /// Updates applied so far.
    pub t: usize,
}

impl AdamW {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        AdamW {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                actual: params.len().min(grad.len()),
            });
        }
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = (1.0 - self.beta1.powi(self.t as i32)) as f32;
        let c2 = (1.0 - self.beta2.powi(self.t as i32)) as f32;
        let (lr, wd, eps) = (lr as f32, self.weight_decay as f32, self.eps as f32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * params[i]);
        }
        Ok(())
    }
}
