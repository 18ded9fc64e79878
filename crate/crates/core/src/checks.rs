//! Finite-difference checks of every hand-written backward pass, shared by
//! the unit tests and the acceptance run.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifiers::RnnNet;
use crate::error::Result;
use crate::fingertip::{FingertipArch, FingertipNet};
use crate::nn::{
    grad_check, softmax_cross_entropy, Conv2dParams, DenseParams, Direction, FnObjective, LstmCellParams, PoolSpec,
    Tensor,
};

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub component: &'static str,
    pub max_rel_error: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y = Wx + b` on a batch of 3, loss `r·y`; checks W, b and x.
pub fn dense(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_out, batch) = (5, 4, 3);
    let layer = DenseParams::init(n_in, n_out, &mut rng);
    let x = Tensor::uniform(&[batch * n_in], 1.0, &mut rng);
    let r = Tensor::uniform(&[batch * n_out], 1.0, &mut rng);
    let mut bias = layer.bias.clone();
    bias.data_mut().copy_from_slice(Tensor::uniform(&[n_out], 0.5, &mut rng).data());
    let params = vec![layer.weight.clone(), bias, x];
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| {
            let l = DenseParams::new(p[0].clone(), p[1].clone())?;
            Ok(dot(&l.forward_batch(p[2].data(), batch), r.data()))
        },
        gradient: |p: &[Tensor]| {
            let l = DenseParams::new(p[0].clone(), p[1].clone())?;
            let mut g = l.zeros_like();
            let dx = l.backward_batch(p[2].data(), r.data(), batch, &mut g);
            Ok(vec![g.weight, g.bias, Tensor::vector(dx)])
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// 3×3 convolution over a 2×7×6 input, loss `r·y`; checks kernels, bias and input.
pub fn conv2d(seed: u64) -> Result<f64> {
    conv2d_strided(seed, 1)
}

fn conv2d_strided(seed: u64, stride: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c_in, h, w) = (2, 7, 6);
    let mut layer = Conv2dParams::init(c_in, 3, 3, &mut rng);
    layer.stride = stride;
    layer.bias = Tensor::uniform(&[3], 0.5, &mut rng);
    let (oh, ow) = layer.output_dims(h, w)?;
    let x = Tensor::uniform(&[c_in * h * w], 1.0, &mut rng);
    let r = Tensor::uniform(&[3 * oh * ow], 1.0, &mut rng);
    let params = vec![layer.weight.clone(), layer.bias.clone(), x];
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| {
            let l = Conv2dParams::new(p[0].clone(), p[1].clone(), stride)?;
            Ok(dot(&l.forward(p[2].data(), h, w)?.0, r.data()))
        },
        gradient: |p: &[Tensor]| {
            let l = Conv2dParams::new(p[0].clone(), p[1].clone(), stride)?;
            let (_, cache) = l.forward(p[2].data(), h, w)?;
            let mut g = l.zeros_like();
            let dx = l.backward(&cache, r.data(), &mut g, true).expect("input gradient requested");
            Ok(vec![g.weight, g.bias, Tensor::vector(dx)])
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// 2×2 max-pool over distinct values spaced well beyond ε, so no window's
/// argmax can change under perturbation.
pub fn maxpool(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = (2, 6, 8);
    let mut values: Vec<f64> = (0..c * h * w).map(|i| i as f64 * 0.01).collect();
    values.shuffle(&mut rng);
    let spec = PoolSpec::default();
    let (oh, ow) = spec.output_dims(h, w)?;
    let r = Tensor::uniform(&[c * oh * ow], 1.0, &mut rng);
    let params = vec![Tensor::vector(values)];
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| Ok(dot(&spec.forward(p[0].data(), c, h, w)?.0, r.data())),
        gradient: |p: &[Tensor]| {
            let (_, idx) = spec.forward(p[0].data(), c, h, w)?;
            Ok(vec![Tensor::vector(spec.backward(r.data(), &idx, c * h * w))])
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

pub fn softmax_ce(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = vec![Tensor::uniform(&[10], 3.0, &mut rng)];
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| Ok(softmax_cross_entropy(&p[0], 3)?.loss),
        gradient: |p: &[Tensor]| Ok(vec![softmax_cross_entropy(&p[0], 3)?.grad_logits]),
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// Batched unroll of one cell for 5 steps, loss `r·h_T`; checks W, U and b.
pub fn lstm_cell(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ni, nh, batch, steps) = (3, 4, 2, 5);
    let mut cell = LstmCellParams::init(ni, nh, &mut rng);
    for t in cell.tensors_mut() {
        *t = Tensor::uniform(t.shape(), 0.8, &mut rng);
    }
    let xs = Tensor::uniform(&[batch * steps * ni], 1.0, &mut rng);
    let r = Tensor::uniform(&[batch * nh], 1.0, &mut rng);
    let params: Vec<Tensor> = cell.tensors().into_iter().cloned().collect();
    let rebuild = |p: &[Tensor]| LstmCellParams::new(p[0].clone(), p[1].clone(), p[2].clone());
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| {
            let tape = rebuild(p)?.forward_batch(xs.data(), batch, steps, Direction::Forward)?;
            Ok(dot(tape.final_hidden(), r.data()))
        },
        gradient: |p: &[Tensor]| {
            let c = rebuild(p)?;
            let tape = c.forward_batch(xs.data(), batch, steps, Direction::Forward)?;
            Ok(c.backward_batch(&tape, r.data()).tensors().into_iter().cloned().collect())
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// Whole recurrent classifier (cells plus softmax head) on a batch of 3.
pub fn rnn_classifier(bidirectional: bool, seed: u64) -> Result<f64> {
    let mut net = RnnNet::init(bidirectional, 4, 5, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(100));
    for t in net.tensors_mut() {
        *t = Tensor::uniform(t.shape(), 0.6, &mut rng);
    }
    let steps = 6;
    let labels = vec![2, 7, 0];
    let xs = Tensor::uniform(&[labels.len() * steps * 4], 1.0, &mut rng);
    let params: Vec<Tensor> = net.tensors().into_iter().cloned().collect();
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| Ok(net.with_tensors(p)?.loss_and_grads(xs.data(), &labels, steps)?.0),
        gradient: |p: &[Tensor]| {
            let g = net.with_tensors(p)?.loss_and_grads(xs.data(), &labels, steps)?.1;
            Ok(g.tensors().into_iter().cloned().collect())
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// The fingertip topology shrunk to a 9×9 input.
pub fn fingertip_mini(seed: u64) -> Result<f64> {
    let net = FingertipNet::init(FingertipArch::MINI, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(4));
    let img = Tensor::uniform(&[3, 9, 9], 1.0, &mut rng);
    let tip = (2.0, 6.5);
    let params: Vec<Tensor> = net.tensors().into_iter().cloned().collect();
    let mut objective = FnObjective {
        loss: |p: &[Tensor]| Ok(net.with_tensors(p)?.loss_and_grads(&img, tip)?.0),
        gradient: |p: &[Tensor]| {
            let (_, g) = net.with_tensors(p)?.loss_and_grads(&img, tip)?;
            Ok(g.tensors().into_iter().cloned().collect())
        },
    };
    grad_check(&mut objective, &params, EPSILON)
}

/// Every check above with fixed seeds.
pub fn gradient_suite() -> Result<Vec<GradientCheck>> {
    let runs: [(&'static str, fn() -> Result<f64>); 8] = [
        ("dense", || dense(1)),
        ("conv2d", || conv2d(2)),
        ("maxpool", || maxpool(3)),
        ("softmax_ce", || softmax_ce(4)),
        ("lstm_cell", || lstm_cell(5)),
        ("lstm_classifier", || rnn_classifier(false, 6)),
        ("bilstm_classifier", || rnn_classifier(true, 7)),
        ("fingertip_mini", || fingertip_mini(8)),
    ];
    runs.iter()
        .map(|(component, run)| {
            Ok(GradientCheck {
                component,
                max_rel_error: run()?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_backward_pass_matches_finite_differences() {
        for check in gradient_suite().unwrap() {
            assert!(check.passed(), "{check:?}");
        }
    }

    #[test]
    fn several_seeds() {
        for seed in 10..14 {
            for err in [dense(seed), conv2d(seed), maxpool(seed), lstm_cell(seed)] {
                assert!(err.unwrap() < TOLERANCE);
            }
        }
    }

    #[test]
    fn strided_conv() {
        for seed in 20..23 {
            assert!(conv2d_strided(seed, 2).unwrap() < TOLERANCE);
        }
    }
}
