use serde::{Deserialize, Serialize};

use super::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moments are kept as flat vectors in the
/// parameter container's visiting order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    pub steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self { config, steps: 0, m: vec![0.0; num_params], v: vec![0.0; num_params] }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    /// Moves `params` against `grads` (gradients of a loss to minimise).
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) {
        let g = grads.to_flat();
        assert_eq!(g.len(), self.m.len(), "optimizer/parameter shape mismatch");
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.steps += 1;
        let bc1 = 1.0 - beta1.powi(self.steps as i32);
        let bc2 = 1.0 - beta2.powi(self.steps as i32);
        let mut p = params.to_flat();
        for i in 0..p.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        params.set_flat(&p);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseNet};

    fn scalar(v: f64) -> DenseNet {
        let mut n = DenseNet::zeros(&[1, 1], &[Activation::Identity]);
        n.layers[0].weight[0] = v;
        n
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut zero = scalar(0.0);
        zero.fill(0.0);
        let mut p = scalar(1.5);
        let mut opt = Adam::new(AdamConfig::with_lr(0.1), 2);
        opt.step(&mut p, &zero);
        assert_eq!(p, scalar(1.5));

        // With history, a zero gradient only decays the moments.
        opt.step(&mut p, &scalar(2.0));
        let m_before = opt.first_moment()[0];
        opt.step(&mut p, &zero);
        assert!((opt.first_moment()[0] - 0.9 * m_before).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_descends() {
        let mut p = scalar(0.0);
        let mut opt = Adam::new(AdamConfig::with_lr(0.01), 2);
        for _ in 0..50 {
            opt.step(&mut p, &scalar(3.0));
        }
        assert!(p.layers[0].weight[0] < -0.4);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // loss = (w - 0.75)^2 + (b + 0.5)^2
        let mut p = DenseNet::zeros(&[1, 1], &[Activation::Identity]);
        let mut opt = Adam::new(AdamConfig::with_lr(1e-2), 2);
        for _ in 0..500 {
            let w = p.layers[0].weight[0];
            let b = p.layers[0].bias[0];
            let mut g = p.zeros_like();
            g.layers[0].weight[0] = 2.0 * (w - 0.75);
            g.layers[0].bias[0] = 2.0 * (b + 0.5);
            opt.step(&mut p, &g);
        }
        assert!((p.layers[0].weight[0] - 0.75).abs() < 1e-3, "{:?}", p.layers[0]);
        assert!((p.layers[0].bias[0] + 0.5).abs() < 1e-3);
    }
}
