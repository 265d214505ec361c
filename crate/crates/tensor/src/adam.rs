//! Adam with bias correction. Defaults beta1 = 0.9, beta2 = 0.999,
//! eps = 1e-8; the learning rate comes from the caller.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Optimizer state: one first/second-moment buffer per parameter plus the
/// shared step counter and hyperparameters.
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    t: u64,
    params: Vec<Tensor>,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(params: Vec<Tensor>, lr: f32) -> Adam {
        let m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            params,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over all registered parameters. Parameters without an
    /// accumulated gradient are treated as having a zero gradient.
    pub fn step(&mut self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(TensorError::Contract("adam: lr must be > 0".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in self.params.iter().enumerate() {
            let grad = match p.grad() {
                Some(g) => g,
                None => continue, // zero gradient: moments decay, value holds
            };
            if grad.len() != self.m[i].len() {
                return Err(TensorError::Dimension(format!(
                    "adam: gradient length {} != state length {}",
                    grad.len(),
                    self.m[i].len()
                )));
            }
            for &g in &grad {
                if !g.is_finite() {
                    return Err(TensorError::Numeric(format!(
                        "adam: non-finite gradient {g} at step {}",
                        self.t
                    )));
                }
            }
            let mut data = p.to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..data.len() {
                let g = grad[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_data(&data)?;
        }
        // moments still decay for skipped (zero-grad) parameters
        for (i, p) in self.params.iter().enumerate() {
            if p.grad().is_none() {
                for x in self.m[i].iter_mut() {
                    *x *= self.beta1;
                }
                for x in self.v[i].iter_mut() {
                    *x *= self.beta2;
                }
            }
        }
        Ok(())
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }
}
