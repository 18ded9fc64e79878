//! LSTM cell with packed gates `[input, forget, cell, output]` and
//! batched backpropagation through time.

use rand::Rng;

use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::trajectory::FeatureSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W` is `4H × I`, `U` is `4H × H`, `b` is `4H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    pub w: Tensor,
    pub u: Tensor,
    pub b: Tensor,
}

impl LstmCellParams {
    pub fn new(w: Tensor, u: Tensor, b: Tensor) -> Result<Self> {
        if w.shape().len() != 2 || !w.shape()[0].is_multiple_of(4) {
            return Err(Error::shape(format!("bad LSTM input weight shape {:?}", w.shape())));
        }
        let h = w.shape()[0] / 4;
        u.expect_shape(&[4 * h, h])?;
        b.expect_shape(&[4 * h])?;
        Ok(LstmCellParams { w, u, b })
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmCellParams {
            w: Tensor::zeros(&[4 * hidden_size, input_size]),
            u: Tensor::zeros(&[4 * hidden_size, hidden_size]),
            b: Tensor::zeros(&[4 * hidden_size]),
        }
    }

    /// Uniform ±1/√(I+H) weights; forget-gate bias 1, other biases 0.
    pub fn init<R: Rng + ?Sized>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((input_size + hidden_size) as f64).sqrt();
        let w = Tensor::uniform(&[4 * hidden_size, input_size], bound, rng);
        let u = Tensor::uniform(&[4 * hidden_size, hidden_size], bound, rng);
        let mut b = Tensor::zeros(&[4 * hidden_size]);
        b.data_mut()[hidden_size..2 * hidden_size].fill(1.0);
        LstmCellParams { w, u, b }
    }

    pub fn input_size(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.u.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }

    pub fn tensors(&self) -> [&Tensor; 3] {
        [&self.w, &self.u, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.w, &mut self.u, &mut self.b]
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size(), self.hidden_size())
    }

    /// One cell update: returns `(h', c')`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let (ni, nh) = (self.input_size(), self.hidden_size());
        if x.len() != ni || h.len() != nh || c.len() != nh {
            return Err(Error::shape(format!(
                "LSTM step expects x[{ni}], h[{nh}], c[{nh}], got x[{}], h[{}], c[{}]",
                x.len(),
                h.len(),
                c.len()
            )));
        }
        let mut h_out = vec![0.0; nh];
        let mut c_out = vec![0.0; nh];
        let mut z = vec![0.0; 4 * nh];
        self.step_into(x.data(), h.data(), c.data(), &mut z, &mut h_out, &mut c_out);
        Ok((Tensor::vector(h_out), Tensor::vector(c_out)))
    }

    fn step_into(
        &self,
        x: &[f64],
        h: &[f64],
        c: &[f64],
        z: &mut [f64],
        h_out: &mut [f64],
        c_out: &mut [f64],
    ) {
        let (ni, nh) = (self.input_size(), self.hidden_size());
        let (w, u, b) = (self.w.data(), self.u.data(), self.b.data());
        for (r, zr) in z.iter_mut().enumerate() {
            let wx: f64 = w[r * ni..(r + 1) * ni].iter().zip(x).map(|(a, b)| a * b).sum();
            let uh: f64 = u[r * nh..(r + 1) * nh].iter().zip(h).map(|(a, b)| a * b).sum();
            *zr = b[r] + wx + uh;
        }
        for j in 0..nh {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[nh + j]);
            let g = z[2 * nh + j].tanh();
            let o = sigmoid(z[3 * nh + j]);
            c_out[j] = f * c[j] + i * g;
            h_out[j] = o * c_out[j].tanh();
        }
    }

    /// Unrolls the cell from a zero state and returns the final hidden state.
    pub fn run(&self, seq: &FeatureSequence, direction: Direction) -> Result<Tensor> {
        let mut steps = 0;
        self.run_with_probe(seq, direction, &mut steps)
    }

    /// As [`run`](Self::run), incrementing `steps_taken` once per cell update.
    pub fn run_with_probe(
        &self,
        seq: &FeatureSequence,
        direction: Direction,
        steps_taken: &mut usize,
    ) -> Result<Tensor> {
        self.run_flat(&seq.flatten(), seq.len(), direction, steps_taken)
    }

    /// `seq` is `steps × I` row-major.
    pub fn run_flat(
        &self,
        seq: &[f64],
        steps: usize,
        direction: Direction,
        steps_taken: &mut usize,
    ) -> Result<Tensor> {
        let (ni, nh) = (self.input_size(), self.hidden_size());
        if steps == 0 {
            return Err(Error::invalid("LSTM needs a non-empty sequence"));
        }
        if seq.len() != steps * ni {
            return Err(Error::shape(format!(
                "sequence of {steps} steps needs {} values for input size {ni}, got {}",
                steps * ni,
                seq.len()
            )));
        }
        let mut h = vec![0.0; nh];
        let mut c = vec![0.0; nh];
        let mut h2 = vec![0.0; nh];
        let mut c2 = vec![0.0; nh];
        let mut z = vec![0.0; 4 * nh];
        for s in 0..steps {
            let t = match direction {
                Direction::Forward => s,
                Direction::Backward => steps - 1 - s,
            };
            self.step_into(&seq[t * ni..(t + 1) * ni], &h, &c, &mut z, &mut h2, &mut c2);
            std::mem::swap(&mut h, &mut h2);
            std::mem::swap(&mut c, &mut c2);
            *steps_taken += 1;
        }
        Ok(Tensor::vector(h))
    }

    /// Batched unroll recording everything the backward pass needs.
    ///
    /// `xs` is `batch × steps × I` row-major; sequences all share one length.
    pub fn forward_batch(
        &self,
        xs: &[f64],
        batch: usize,
        steps: usize,
        direction: Direction,
    ) -> Result<LstmTape> {
        let (ni, nh) = (self.input_size(), self.hidden_size());
        if steps == 0 || batch == 0 {
            return Err(Error::invalid("LSTM batch needs at least one step and one sample"));
        }
        if xs.len() != batch * steps * ni {
            return Err(Error::shape(format!(
                "batch input needs {} values, got {}",
                batch * steps * ni,
                xs.len()
            )));
        }
        let g4 = 4 * nh;
        // Inputs regrouped by processing step: steps × batch × I.
        let mut x_steps = vec![0.0; steps * batch * ni];
        for s in 0..steps {
            let t = match direction {
                Direction::Forward => s,
                Direction::Backward => steps - 1 - s,
            };
            for bi in 0..batch {
                let src = &xs[(bi * steps + t) * ni..(bi * steps + t + 1) * ni];
                x_steps[(s * batch + bi) * ni..(s * batch + bi + 1) * ni].copy_from_slice(src);
            }
        }
        let mut gates = vec![0.0; steps * batch * g4];
        let mut hs = vec![0.0; (steps + 1) * batch * nh];
        let mut cs = vec![0.0; (steps + 1) * batch * nh];
        let bias = self.b.data();
        for s in 0..steps {
            let z = &mut gates[s * batch * g4..(s + 1) * batch * g4];
            for row in z.chunks_exact_mut(g4) {
                row.copy_from_slice(bias);
            }
            let x = &x_steps[s * batch * ni..(s + 1) * batch * ni];
            gemm(batch, ni, g4, 1.0, x, false, self.w.data(), true, 1.0, z);
            let (h_prev_all, h_next_all) = hs.split_at_mut((s + 1) * batch * nh);
            let h_prev = &h_prev_all[s * batch * nh..];
            gemm(batch, nh, g4, 1.0, h_prev, false, self.u.data(), true, 1.0, z);
            let h_next = &mut h_next_all[..batch * nh];
            let (c_prev_all, c_next_all) = cs.split_at_mut((s + 1) * batch * nh);
            let c_prev = &c_prev_all[s * batch * nh..];
            let c_next = &mut c_next_all[..batch * nh];
            for bi in 0..batch {
                let zr = &mut z[bi * g4..(bi + 1) * g4];
                for j in 0..nh {
                    let i = sigmoid(zr[j]);
                    let f = sigmoid(zr[nh + j]);
                    let g = zr[2 * nh + j].tanh();
                    let o = sigmoid(zr[3 * nh + j]);
                    zr[j] = i;
                    zr[nh + j] = f;
                    zr[2 * nh + j] = g;
                    zr[3 * nh + j] = o;
                    let k = bi * nh + j;
                    c_next[k] = f * c_prev[k] + i * g;
                    h_next[k] = o * c_next[k].tanh();
                }
            }
        }
        Ok(LstmTape {
            batch,
            steps,
            x_steps,
            gates,
            hs,
            cs,
        })
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    /// Returns parameter gradients (summed over the batch).
    pub fn backward_batch(&self, tape: &LstmTape, dh_final: &[f64]) -> LstmCellParams {
        let (ni, nh) = (self.input_size(), self.hidden_size());
        let (batch, steps) = (tape.batch, tape.steps);
        let g4 = 4 * nh;
        assert_eq!(dh_final.len(), batch * nh, "dh_final size");
        let mut dz_all = vec![0.0; steps * batch * g4];
        let mut dh = dh_final.to_vec();
        let mut dc = vec![0.0; batch * nh];
        for s in (0..steps).rev() {
            let gates = &tape.gates[s * batch * g4..(s + 1) * batch * g4];
            let c_prev = &tape.cs[s * batch * nh..(s + 1) * batch * nh];
            let c_cur = &tape.cs[(s + 1) * batch * nh..(s + 2) * batch * nh];
            let dz = &mut dz_all[s * batch * g4..(s + 1) * batch * g4];
            for bi in 0..batch {
                let gr = &gates[bi * g4..(bi + 1) * g4];
                let dzr = &mut dz[bi * g4..(bi + 1) * g4];
                for j in 0..nh {
                    let k = bi * nh + j;
                    let (i, f, g, o) = (gr[j], gr[nh + j], gr[2 * nh + j], gr[3 * nh + j]);
                    let tc = c_cur[k].tanh();
                    let d_o = dh[k] * tc;
                    let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
                    dzr[j] = dck * g * i * (1.0 - i);
                    dzr[nh + j] = dck * c_prev[k] * f * (1.0 - f);
                    dzr[2 * nh + j] = dck * i * (1.0 - g * g);
                    dzr[3 * nh + j] = d_o * o * (1.0 - o);
                    dc[k] = dck * f;
                }
            }
            gemm(batch, g4, nh, 1.0, dz, false, self.u.data(), false, 0.0, &mut dh);
        }
        let mut grads = self.zeros_like();
        let rows = steps * batch;
        gemm(g4, rows, ni, 1.0, &dz_all, true, &tape.x_steps, false, 0.0, grads.w.data_mut());
        let h_prev = &tape.hs[..rows * nh];
        gemm(g4, rows, nh, 1.0, &dz_all, true, h_prev, false, 0.0, grads.u.data_mut());
        let gb = grads.b.data_mut();
        for row in dz_all.chunks_exact(g4) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        grads
    }
}

/// Activations recorded by [`LstmCellParams::forward_batch`].
#[derive(Clone, Debug)]
pub struct LstmTape {
    batch: usize,
    steps: usize,
    x_steps: Vec<f64>,
    gates: Vec<f64>,
    hs: Vec<f64>,
    cs: Vec<f64>,
}

impl LstmTape {
    /// `batch × H` hidden state after the last processed step.
    pub fn final_hidden(&self) -> &[f64] {
        let nh = self.hs.len() / ((self.steps + 1) * self.batch);
        &self.hs[self.steps * self.batch * nh..]
    }
}
