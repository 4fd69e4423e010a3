//! Adam with bias correction. Moment buffers are keyed by parameter name and
//! iterate in parameter insertion order, so updates are deterministic.

use super::tensors::TensorMap;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    m: TensorMap,
    v: TensorMap,
    t: u64,
}

impl Adam {
    pub fn new(params: &TensorMap, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with the given learning rate. `grads` must hold exactly the
    /// parameter names (missing names mean a broken backward pass).
    pub fn step(&mut self, params: &mut TensorMap, grads: &TensorMap, lr: f64) {
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let g = grads.try_get(name).unwrap_or_else(|_| {
                panic!("missing gradient for parameter {name}");
            });
            let m = self.m.get_mut(name);
            let v = self.v.get_mut(name);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + self.cfg.eps);
                });
        }
    }
}

/// Global L2 clip: scales all gradients by min(1, max_norm / ||g||).
pub fn clip_grad_norm(grads: &mut TensorMap, max_norm: f64) -> f64 {
    let norm = grads.l2_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}
