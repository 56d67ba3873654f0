//! Adam with bias-corrected moments.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            t: 0,
        }
    }

    /// One update; `grads[i]` must match `params[i]`.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape != g.shape {
                return Err(Error::Shape(format!(
                    "param {:?} vs grad {:?}",
                    p.shape, g.shape
                )));
            }
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::row(vec![1.0, -2.0])];
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.step(&mut p, &[Tensor::row(vec![0.0, 0.0])]).unwrap();
        assert_eq!(p[0].data, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_bias_correction() {
        let g = 0.37;
        let mut s = AdamState::new(AdamConfig::default(), &[Tensor::scalar(0.0)]);
        let mut p = vec![Tensor::scalar(1.0)];
        s.step(&mut p, &[Tensor::scalar(g)]).unwrap();
        let m_hat = s.m[0][0] / (1.0 - 0.9);
        assert!((m_hat - g).abs() < 1e-15);
        assert!(s.v[0][0] >= 0.0);
    }

    #[test]
    fn scalar_hand_value() {
        let mut p = vec![Tensor::scalar(1.0)];
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        let expect = 1.0 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((p[0].item() - expect).abs() < 1e-15);
        assert!((p[0].item() - 0.999).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let init = vec![Tensor::row(vec![0.5, 0.25])];
        let grads = [Tensor::row(vec![0.1, -0.3])];
        let run = || {
            let mut p = init.clone();
            let mut s = AdamState::new(AdamConfig::default(), &p);
            for _ in 0..5 {
                s.step(&mut p, &grads).unwrap();
            }
            (p, s)
        };
        assert_eq!(run(), run());
        let mut p = init.clone();
        let mut s = AdamState::new(AdamConfig::default(), &p);
        assert!(s.step(&mut p, &[Tensor::row(vec![1.0])]).is_err());
    }
}
