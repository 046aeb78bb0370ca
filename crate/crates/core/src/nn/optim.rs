use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use super::tensor::Mat;

/// Linear warm-up followed by linear decay to zero at `total` steps.
///
/// `lr(s) = peak * min(s / warmup, 1 - (s - warmup) / (total - warmup))`, clipped at 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmupLinear {
    pub peak: f64,
    pub warmup: usize,
    pub total: usize,
}

impl WarmupLinear {
    pub fn lr(&self, step: usize) -> f64 {
        let s = step as f64;
        let warm = if self.warmup == 0 {
            1.0
        } else {
            s / self.warmup as f64
        };
        let decay = if self.total <= self.warmup {
            1.0
        } else {
            1.0 - (s - self.warmup as f64) / (self.total - self.warmup) as f64
        };
        (self.peak * warm.min(decay)).max(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Mat> = store.ids().map(|id| {
            let p = store.get(id);
            Mat::zeros(p.rows, p.cols)
        }).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = &grads.tensors[i];
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.data.len() {
                let gj = g.data[j];
                m.data[j] = self.beta1 * m.data[j] + (1.0 - self.beta1) * gj;
                v.data[j] = self.beta2 * v.data[j] + (1.0 - self.beta2) * gj * gj;
                let mh = m.data[j] / bc1;
                let vh = v.data[j] / bc2;
                p.data[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Rescale `grads` so its global norm is at most `max_norm`; returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut Grads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if max_norm > 0.0 && norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_pointwise() {
        let s = WarmupLinear {
            peak: 1e-3,
            warmup: 200,
            total: 3000,
        };
        assert_eq!(s.lr(0), 0.0);
        assert!((s.lr(100) - 5e-4).abs() < 1e-15);
        assert!((s.lr(200) - 1e-3).abs() < 1e-15);
        assert!((s.lr(1600) - 5e-4).abs() < 1e-15);
        assert_eq!(s.lr(3000), 0.0);
        assert_eq!(s.lr(4000), 0.0);
        for step in 0..=3000 {
            let want = (1e-3 * (step as f64 / 200.0).min(1.0 - (step as f64 - 200.0) / 2800.0)).max(0.0);
            assert!((s.lr(step) - want).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut store = ParamStore::new();
        let id = store.add("x", Mat::from_vec(1, 2, vec![1.0, -1.0]));
        let mut opt = Adam::new(&store);
        let mut g = Grads::zeros_like(&store);
        g.tensors[0] = Mat::from_vec(1, 2, vec![2.0, -3.0]);
        opt.step(&mut store, &g, 0.1);
        let p = store.get(id);
        assert!((p.data[0] - 0.9).abs() < 1e-6);
        assert!((p.data[1] + 0.9).abs() < 1e-6);
    }
}
