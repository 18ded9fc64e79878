//! LSTM and Bi-LSTM sequence classifiers: final hidden state(s) → dense → softmax.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gestures::GestureClass;
use crate::nn::{
    clip_grad_norm, softmax, softmax_cross_entropy, DenseParams, Direction, LstmCellParams,
    OptimState, Tensor,
};

use super::Prediction;

const CLASSES: usize = GestureClass::COUNT;

#[derive(Clone, Debug, PartialEq)]
pub struct RnnNet {
    pub forward: LstmCellParams,
    /// Present for the bidirectional variant.
    pub backward: Option<LstmCellParams>,
    pub head: DenseParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RnnHyper {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl RnnNet {
    pub fn init(bidirectional: bool, input_size: usize, hidden_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let forward = LstmCellParams::init(input_size, hidden_size, &mut rng);
        let backward = bidirectional.then(|| LstmCellParams::init(input_size, hidden_size, &mut rng));
        let width = if bidirectional { 2 * hidden_size } else { hidden_size };
        let head = DenseParams::init(width, CLASSES, &mut rng);
        RnnNet {
            forward,
            backward,
            head,
        }
    }

    pub fn is_bidirectional(&self) -> bool {
        self.backward.is_some()
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    pub fn param_count(&self) -> usize {
        self.forward.param_count()
            + self.backward.as_ref().map_or(0, |b| b.param_count())
            + self.head.param_count()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.forward.tensors().into_iter().collect();
        if let Some(b) = &self.backward {
            v.extend(b.tensors());
        }
        v.extend(self.head.tensors());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.forward.tensors_mut().into_iter().collect();
        if let Some(b) = &mut self.backward {
            v.extend(b.tensors_mut());
        }
        v.extend(self.head.tensors_mut());
        v
    }

    /// Inverse of [`tensors`](Self::tensors) for a network of the same layout.
    pub fn with_tensors(&self, tensors: &[Tensor]) -> Result<RnnNet> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(Error::shape("tensor count does not match network layout"));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            slot.expect_shape(t.shape())?;
            *slot = t.clone();
        }
        Ok(out)
    }

    fn zeros_like(&self) -> RnnNet {
        RnnNet {
            forward: self.forward.zeros_like(),
            backward: self.backward.as_ref().map(|b| b.zeros_like()),
            head: self.head.zeros_like(),
        }
    }

    fn features(&self, xs: &[f64], batch: usize, steps: usize) -> Result<Features> {
        let fwd = self.forward.forward_batch(xs, batch, steps, Direction::Forward)?;
        let bwd = match &self.backward {
            Some(cell) => Some(cell.forward_batch(xs, batch, steps, Direction::Backward)?),
            None => None,
        };
        let nh = self.hidden_size();
        let width = self.head.inputs();
        let mut feats = vec![0.0; batch * width];
        for b in 0..batch {
            let row = &mut feats[b * width..(b + 1) * width];
            row[..nh].copy_from_slice(&fwd.final_hidden()[b * nh..(b + 1) * nh]);
            if let Some(t) = &bwd {
                row[nh..].copy_from_slice(&t.final_hidden()[b * nh..(b + 1) * nh]);
            }
        }
        Ok(Features { fwd, bwd, feats })
    }

    /// Class logits for `batch` sequences laid out `batch × steps × I`.
    pub fn logits(&self, xs: &[f64], batch: usize, steps: usize) -> Result<Vec<f64>> {
        let f = self.features(xs, batch, steps)?;
        Ok(self.head.forward_batch(&f.feats, batch))
    }

    pub fn predict(&self, seq: &[f64], steps: usize) -> Result<Prediction> {
        let logits = self.logits(seq, 1, steps)?;
        let probs = softmax(&logits);
        Ok(Prediction::from_probs(probs.try_into().expect("ten classes")))
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grads(
        &self,
        xs: &[f64],
        labels: &[usize],
        steps: usize,
    ) -> Result<(f64, RnnNet)> {
        let batch = labels.len();
        let f = self.features(xs, batch, steps)?;
        let logits = self.head.forward_batch(&f.feats, batch);
        let mut dlogits = vec![0.0; batch * CLASSES];
        let mut loss = 0.0;
        let scale = 1.0 / batch as f64;
        for (b, &label) in labels.iter().enumerate() {
            let z = Tensor::vector(logits[b * CLASSES..(b + 1) * CLASSES].to_vec());
            let ce = softmax_cross_entropy(&z, label)?;
            loss += ce.loss;
            for (d, g) in dlogits[b * CLASSES..(b + 1) * CLASSES]
                .iter_mut()
                .zip(ce.grad_logits.data())
            {
                *d = g * scale;
            }
        }
        let mut grads = self.zeros_like();
        let dfeats = self.head.backward_batch(&f.feats, &dlogits, batch, &mut grads.head);
        let nh = self.hidden_size();
        let width = self.head.inputs();
        let mut dh_f = vec![0.0; batch * nh];
        let mut dh_b = vec![0.0; batch * nh];
        for b in 0..batch {
            let row = &dfeats[b * width..(b + 1) * width];
            dh_f[b * nh..(b + 1) * nh].copy_from_slice(&row[..nh]);
            if self.backward.is_some() {
                dh_b[b * nh..(b + 1) * nh].copy_from_slice(&row[nh..]);
            }
        }
        grads.forward = self.forward.backward_batch(&f.fwd, &dh_f);
        if let (Some(cell), Some(tape)) = (&self.backward, &f.bwd) {
            grads.backward = Some(cell.backward_batch(tape, &dh_b));
        }
        Ok((loss * scale, grads))
    }

    /// Minibatch SGD with momentum and gradient-norm clipping.
    /// `xs` is `n × steps × I`; returns per-epoch mean loss.
    pub fn train(
        &mut self,
        xs: &[f64],
        labels: &[usize],
        steps: usize,
        hyper: &RnnHyper,
    ) -> Result<Vec<f64>> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid("recurrent training set is empty"));
        }
        let row = steps * self.input_size();
        if xs.len() != n * row {
            return Err(Error::shape("training tensor does not match label count"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7EA1_1);
        let mut opt = OptimState::momentum(hyper.learning_rate, hyper.momentum);
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(hyper.epochs);
        let mut bx = Vec::with_capacity(hyper.batch_size * row);
        let mut by = Vec::with_capacity(hyper.batch_size);
        for epoch in 0..hyper.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(hyper.batch_size) {
                bx.clear();
                by.clear();
                for &i in chunk {
                    bx.extend_from_slice(&xs[i * row..(i + 1) * row]);
                    by.push(labels[i]);
                }
                let (loss, mut grads) = self.loss_and_grads(&bx, &by, steps)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite training loss in epoch {}",
                        epoch + 1
                    )));
                }
                total += loss * chunk.len() as f64;
                clip_grad_norm(&mut grads.tensors_mut(), hyper.clip_norm);
                let g = grads.tensors();
                opt.step(&mut self.tensors_mut(), &g)?;
            }
            history.push(total / n as f64);
        }
        Ok(history)
    }
}

struct Features {
    fwd: crate::nn::LstmTape,
    bwd: Option<crate::nn::LstmTape>,
    feats: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, FnObjective};

    fn randomized(bidirectional: bool, seed: u64) -> RnnNet {
        let mut net = RnnNet::init(bidirectional, 4, 5, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for t in net.tensors_mut() {
            *t = Tensor::uniform(t.shape(), 0.6, &mut rng);
        }
        net
    }

    #[test]
    fn parameter_count_arithmetic() {
        let net = RnnNet::init(true, 4, 64, 0);
        let cell = 4 * 64 * 4 + 4 * 64 * 64 + 4 * 64;
        assert_eq!(net.param_count(), 2 * cell + (2 * 64 * 10 + 10));
        let uni = RnnNet::init(false, 4, 64, 0);
        assert_eq!(uni.param_count(), cell + 64 * 10 + 10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for bidirectional in [false, true] {
            let net = randomized(bidirectional, 5);
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let steps = 6;
            let labels = vec![2, 7, 0];
            let xs = Tensor::uniform(&[labels.len() * steps * 4], 1.0, &mut rng);
            let params: Vec<Tensor> = net.tensors().into_iter().cloned().collect();
            let mut obj = FnObjective {
                loss: |p: &[Tensor]| Ok(net.with_tensors(p)?.loss_and_grads(xs.data(), &labels, steps)?.0),
                gradient: |p: &[Tensor]| {
                    let g = net.with_tensors(p)?.loss_and_grads(xs.data(), &labels, steps)?.1;
                    Ok(g.tensors().into_iter().cloned().collect())
                },
            };
            let err = grad_check(&mut obj, &params, 1e-5).unwrap();
            assert!(err < 1e-4, "bidirectional={bidirectional}: {err}");
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let steps = 5;
        let n = 12;
        let xs = Tensor::uniform(&[n * steps * 4], 1.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let hyper = RnnHyper {
            epochs: 15,
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 4,
            clip_norm: 5.0,
            seed: 9,
        };
        let mut a = RnnNet::init(true, 4, 6, 2);
        let mut b = a.clone();
        let ha = a.train(xs.data(), &labels, steps, &hyper).unwrap();
        let hb = b.train(xs.data(), &labels, steps, &hyper).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.last().unwrap() < &ha[0]);
    }

    #[test]
    fn length_one_sequence_same_in_both_directions() {
        let net = randomized(true, 3);
        let x = [0.3, -0.2, 0.9, 0.1];
        let mut n = 0;
        let f = net.forward.run_flat(&x, 1, Direction::Forward, &mut n).unwrap();
        let g = net.forward.run_flat(&x, 1, Direction::Backward, &mut n).unwrap();
        assert_eq!(f, g);
    }
}
