use super::network::{Gradients, Network};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Adam {
    pub fn new(lr: f32, beta1: f32) -> Self {
        Self {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Vec<f32>> = net.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Parameters flagged in `frozen` and their moments are
    /// left untouched.
    pub fn update(&mut self, adam: &Adam, net: &mut Network, grads: &Gradients, frozen: &[bool]) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - adam.beta1.powi(t);
        let c2 = 1.0 - adam.beta2.powi(t);
        for (i, param) in net.params_mut().iter_mut().enumerate() {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.0[i]);
            for j in 0..param.value.len() {
                m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * g[j];
                v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                param.value[j] -= adam.lr * m_hat / (v_hat.sqrt() + adam.eps);
            }
        }
    }
}
