use rand::Rng;

use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer `y = Wx + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl DenseParams {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::shape("dense weight must be 2-D"));
        }
        bias.expect_shape(&[weight.shape()[0]])?;
        Ok(DenseParams { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        DenseParams {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Uniform ±1/√fan_in initialization, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        DenseParams {
            weight: Tensor::uniform(&[outputs, inputs], bound, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.inputs() {
            return Err(Error::shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        Ok(Tensor::vector(self.forward_batch(x.data(), 1)))
    }

    /// Row-major `batch × in` to `batch × out`.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let mut y = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            y.extend_from_slice(self.bias.data());
        }
        gemm(batch, n_in, n_out, 1.0, x, false, self.weight.data(), true, 1.0, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward_batch(
        &self,
        x: &[f64],
        dy: &[f64],
        batch: usize,
        grads: &mut DenseParams,
    ) -> Vec<f64> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        gemm(n_out, batch, n_in, 1.0, dy, true, x, false, 1.0, grads.weight.data_mut());
        let gb = grads.bias.data_mut();
        for row in dy.chunks_exact(n_out) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; batch * n_in];
        gemm(batch, n_out, n_in, 1.0, dy, false, self.weight.data(), false, 0.0, &mut dx);
        dx
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zeros_like(&self) -> Self {
        DenseParams::zeros(self.inputs(), self.outputs())
    }
}
