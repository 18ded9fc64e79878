//! One-vs-rest linear SVM trained on the L2-regularized hinge loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gestures::GestureClass;
use crate::nn::{linalg::gemm, softmax, OptimState, Tensor};

use super::Prediction;

const CLASSES: usize = GestureClass::COUNT;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSvm {
    /// `10 × d` scorer weights.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub margin: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl LinearSvm {
    pub fn zeros(dim: usize) -> Self {
        LinearSvm {
            weight: Tensor::zeros(&[CLASSES, dim]),
            bias: Tensor::zeros(&[CLASSES]),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; CLASSES]> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "SVM expects {} features, got {}",
                self.dim(),
                x.len()
            )));
        }
        let mut s = [0.0; CLASSES];
        for (c, sc) in s.iter_mut().enumerate() {
            let w = &self.weight.data()[c * self.dim()..(c + 1) * self.dim()];
            *sc = self.bias.data()[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(s)
    }

    /// Softmax over the ten linear scores.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let s = self.scores(x)?;
        let p = softmax(&s);
        Ok(Prediction::from_probs(p.try_into().expect("ten classes")))
    }

    /// Mean one-vs-rest hinge loss plus `λ/2·‖W‖²`, with gradients.
    pub fn objective(
        &self,
        xs: &[f64],
        labels: &[usize],
        margin: f64,
        lambda: f64,
    ) -> (f64, LinearSvm) {
        let d = self.dim();
        let n = labels.len();
        let mut scores = Vec::with_capacity(n * CLASSES);
        for _ in 0..n {
            scores.extend_from_slice(self.bias.data());
        }
        gemm(n, d, CLASSES, 1.0, xs, false, self.weight.data(), true, 1.0, &mut scores);
        let mut dscores = vec![0.0; n * CLASSES];
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            for c in 0..CLASSES {
                let y = if c == label { 1.0 } else { -1.0 };
                let slack = margin - y * scores[i * CLASSES + c];
                if slack > 0.0 {
                    loss += slack;
                    dscores[i * CLASSES + c] = -y / n as f64;
                }
            }
        }
        loss /= n as f64;
        loss += 0.5 * lambda * self.weight.sum_squares();
        let mut grad = LinearSvm::zeros(d);
        gemm(CLASSES, n, d, 1.0, &dscores, true, xs, false, 0.0, grad.weight.data_mut());
        grad.weight.axpy(lambda, &self.weight).expect("same shape");
        for row in dscores.chunks_exact(CLASSES) {
            for (g, v) in grad.bias.data_mut().iter_mut().zip(row) {
                *g += v;
            }
        }
        (loss, grad)
    }

    /// Minibatch SGD; returns the model and per-epoch mean objective.
    pub fn train(xs: &[f64], labels: &[usize], hyper: &SvmHyper) -> Result<(LinearSvm, Vec<f64>)> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("SVM training set is empty"));
        }
        let d = xs.len() / n;
        let mut model = LinearSvm::zeros(d);
        let mut opt = OptimState::momentum(hyper.learning_rate, hyper.momentum);
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(hyper.epochs);
        let mut bx = Vec::new();
        let mut by = Vec::new();
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(hyper.batch_size) {
                bx.clear();
                by.clear();
                for &i in chunk {
                    bx.extend_from_slice(&xs[i * d..(i + 1) * d]);
                    by.push(labels[i]);
                }
                let (loss, grad) = model.objective(&bx, &by, hyper.margin, hyper.lambda);
                total += loss * chunk.len() as f64;
                let LinearSvm { weight, bias } = &mut model;
                opt.step(&mut [weight, bias], &[&grad.weight, &grad.bias])?;
            }
            let mean = total / n as f64;
            if !mean.is_finite() {
                return Err(Error::Numeric(format!("SVM loss diverged in epoch {}", epoch + 1)));
            }
            history.push(mean);
        }
        Ok((model, history))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, FnObjective};

    #[test]
    fn zero_weights_uniform_and_class_zero() {
        let m = LinearSvm::zeros(8);
        let p = m.predict(&[1.0; 8]).unwrap();
        assert!(p.probs.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        assert_eq!(p.class.code(), 0);
    }

    #[test]
    fn separable_two_class_problem() {
        // class 0 on x0 > 0, class 1 on x0 < 0, second feature noise-free filler
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..20 {
            let t = 0.2 + i as f64 * 0.05;
            xs.extend_from_slice(&[t, 0.5 - t / 3.0]);
            ys.push(0);
            xs.extend_from_slice(&[-t, 0.1 + t / 7.0]);
            ys.push(1);
        }
        let hyper = SvmHyper {
            epochs: 50,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 8,
            margin: 1.0,
            lambda: 1e-4,
            seed: 3,
        };
        let (m, hist) = LinearSvm::train(&xs, &ys, &hyper).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
        for (i, &y) in ys.iter().enumerate() {
            assert_eq!(m.predict(&xs[i * 2..i * 2 + 2]).unwrap().class.code(), y);
        }
    }

    #[test]
    fn hinge_gradient_matches_finite_differences() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs = Tensor::uniform(&[6 * 5], 1.0, &mut rng);
        let labels = vec![0, 3, 9, 3, 1, 7];
        let w0 = Tensor::uniform(&[CLASSES, 5], 0.7, &mut rng);
        let b0 = Tensor::uniform(&[CLASSES], 0.7, &mut rng);
        let model = |p: &[Tensor]| LinearSvm {
            weight: p[0].clone(),
            bias: p[1].clone(),
        };
        let mut obj = FnObjective {
            loss: |p: &[Tensor]| Ok(model(p).objective(xs.data(), &labels, 1.0, 0.01).0),
            gradient: |p: &[Tensor]| {
                let g = model(p).objective(xs.data(), &labels, 1.0, 0.01).1;
                Ok(vec![g.weight, g.bias])
            },
        };
        let err = grad_check(&mut obj, &[w0, b0], 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn empty_training_set() {
        let hyper = SvmHyper {
            epochs: 1,
            learning_rate: 0.1,
            momentum: 0.0,
            batch_size: 4,
            margin: 1.0,
            lambda: 0.0,
            seed: 0,
        };
        assert!(matches!(LinearSvm::train(&[], &[], &hyper), Err(Error::InvalidArgument(_))));
    }
}
