use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateRule {
    /// `v ← μv + g`, `w ← w − ηv`; plain SGD when `μ = 0`.
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer state; accumulators are created on the first step.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub learning_rate: f64,
    pub rule: UpdateRule,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    steps: u64,
}

impl OptimState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self::with_rule(learning_rate, UpdateRule::Sgd { momentum: 0.0 })
    }

    pub fn momentum(learning_rate: f64, momentum: f64) -> Self {
        Self::with_rule(learning_rate, UpdateRule::Sgd { momentum })
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::with_rule(
            learning_rate,
            UpdateRule::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
        )
    }

    pub fn with_rule(learning_rate: f64, rule: UpdateRule) -> Self {
        OptimState {
            learning_rate,
            rule,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every parameter tensor.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            p.expect_shape(g.shape())?;
        }
        let needs_first = !matches!(self.rule, UpdateRule::Sgd { momentum } if momentum == 0.0);
        let needs_second = matches!(self.rule, UpdateRule::Adam { .. });
        if needs_first && self.first.is_empty() {
            self.first = grads.iter().map(|g| Tensor::zeros_like(g)).collect();
        }
        if needs_second && self.second.is_empty() {
            self.second = grads.iter().map(|g| Tensor::zeros_like(g)).collect();
        }
        for (acc, g) in self.first.iter().chain(&self.second).zip(grads.iter().cycle()) {
            acc.expect_shape(g.shape())?;
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.rule {
            UpdateRule::Sgd { momentum } if momentum == 0.0 => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            UpdateRule::Sgd { momentum } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    for ((w, d), vel) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                        *vel = momentum * *vel + d;
                        *w -= lr * *vel;
                    }
                }
            }
            UpdateRule::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((w, d), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rescales gradients in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_scalar_step() {
        let mut opt = OptimState::sgd(0.1);
        let mut w = Tensor::vector(vec![1.0]);
        opt.step(&mut [&mut w], &[&Tensor::vector(vec![0.5])]).unwrap();
        assert!((w.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        for mut opt in [OptimState::sgd(0.3), OptimState::momentum(0.3, 0.9), OptimState::adam(0.3)] {
            let mut w = Tensor::vector(vec![1.5, -2.0]);
            for _ in 0..5 {
                opt.step(&mut [&mut w], &[&Tensor::zeros(&[2])]).unwrap();
            }
            assert_eq!(w.data(), &[1.5, -2.0]);
        }
    }

    #[test]
    fn quadratic_converges_geometrically() {
        let mut opt = OptimState::sgd(0.1);
        let mut w = Tensor::vector(vec![0.0]);
        for _ in 0..100 {
            let g = Tensor::vector(vec![2.0 * (w.data()[0] - 3.0)]);
            opt.step(&mut [&mut w], &[&g]).unwrap();
        }
        // error contracts by 0.8 per step: 3·0.8¹⁰⁰ ≈ 6e-10
        assert!((w.data()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = OptimState::momentum(1.0, 0.5);
        let mut w = Tensor::vector(vec![0.0]);
        let g = Tensor::vector(vec![1.0]);
        opt.step(&mut [&mut w], &[&g]).unwrap();
        opt.step(&mut [&mut w], &[&g]).unwrap();
        assert_eq!(w.data()[0], -2.5);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = OptimState::sgd(0.1);
        let mut w = Tensor::vector(vec![0.0, 1.0]);
        assert!(matches!(
            opt.step(&mut [&mut w], &[&Tensor::zeros(&[3])]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = Tensor::vector(vec![3.0, 4.0]);
        let n = clip_grad_norm(&mut [&mut g], 1.0);
        assert_eq!(n, 5.0);
        assert!((g.data()[0] - 0.6).abs() < 1e-15);
    }
}
