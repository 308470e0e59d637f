//! Gradient-descent optimizers over an [`Mlp`].

use serde::{Deserialize, Serialize};

use super::mlp::{Grads, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Optimizer {
    pub fn adam(lr: f64, n_params: usize) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            eps: 0.0,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::Adam => Self::adam(lr, n_params),
            OptimizerKind::Sgd => Self::sgd(lr),
        }
    }

    /// One update of flat parameters in place.
    pub fn step_flat(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in theta.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.t as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (l, g) in net.layers.iter_mut().zip(&grads.layers) {
            let params = l.w.iter_mut().chain(l.b.iter_mut());
            let gs = g.w.iter().chain(g.b.iter());
            for (p, &gi) in params.zip(gs) {
                match self.kind {
                    OptimizerKind::Sgd => *p -= self.lr * gi,
                    OptimizerKind::Adam => {
                        let m = &mut self.m[k];
                        let v = &mut self.v[k];
                        *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                        *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                        *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                    }
                }
                k += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut theta = vec![0.3, -1.2];
        let mut opt = Optimizer::adam(0.005, 2);
        opt.step_flat(&mut theta, &[0.0, 0.0]);
        assert_eq!(theta, vec![0.3, -1.2]);
        let mut sgd = Optimizer::sgd(0.1);
        sgd.step_flat(&mut theta, &[0.0, 0.0]);
        assert_eq!(theta, vec![0.3, -1.2]);
    }

    #[test]
    fn sgd_single_step() {
        let mut theta = vec![0.0];
        Optimizer::sgd(0.1).step_flat(&mut theta, &[1.0]);
        assert!((theta[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step() {
        // m̂ = g, v̂ = g², so the step is α·g/(|g| + ε)
        for g in [0.5, -3.0, 1e-3] {
            let mut theta = vec![1.0];
            Optimizer::adam(0.005, 1).step_flat(&mut theta, &[g]);
            let expect = 1.0 - 0.005 * g / (g.abs() + 1e-8);
            assert!((theta[0] - expect).abs() < 1e-15, "{g}");
        }
    }

    #[test]
    fn net_step_matches_flat_step() {
        use super::super::mlp::Mlp;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut net = Mlp::init(&[3, 4, 2], &mut rng);
        let grads_net = Mlp::init(&[3, 4, 2], &mut rng);
        let grads = Grads {
            layers: grads_net.layers.clone(),
        };
        let mut flat = net.flat_params();
        let mut a = Optimizer::adam(0.01, flat.len());
        let mut b = a.clone();
        for _ in 0..3 {
            a.step(&mut net, &grads);
            b.step_flat(&mut flat, &grads.flat());
        }
        assert_eq!(net.flat_params(), flat);
    }
}
