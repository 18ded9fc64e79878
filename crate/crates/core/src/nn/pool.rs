use super::tensor::Tensor;
use crate::error::{Error, Result};

/// What to do with a trailing row/column that does not fill a window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OddDims {
    Reject,
    /// Floor division: the trailing row/column is dropped.
    Floor,
}

/// 2×2 max pooling with stride 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub odd: OddDims,
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec { odd: OddDims::Reject }
    }
}

pub const POOL_WINDOW: usize = 2;

impl PoolSpec {
    pub fn floor() -> Self {
        PoolSpec { odd: OddDims::Floor }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        if self.odd == OddDims::Reject && (!h.is_multiple_of(2) || !w.is_multiple_of(2)) {
            return Err(Error::shape(format!("max-pool needs even spatial dims, got {h}×{w}")));
        }
        if h < POOL_WINDOW || w < POOL_WINDOW {
            return Err(Error::shape(format!("input {h}×{w} smaller than the pool window")));
        }
        Ok((h / 2, w / 2))
    }

    /// `x` is `C × H × W`; returns pooled tensor and flat argmax indices into `x`.
    pub fn apply(&self, x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
        let s = x.shape();
        if s.len() != 3 {
            return Err(Error::shape(format!("max-pool expects C×H×W, got {s:?}")));
        }
        let (out, idx) = self.forward(x.data(), s[0], s[1], s[2])?;
        let (oh, ow) = self.output_dims(s[1], s[2])?;
        Ok((Tensor::new(vec![s[0], oh, ow], out)?, idx))
    }

    pub fn forward(&self, x: &[f64], c: usize, h: usize, w: usize) -> Result<(Vec<f64>, Vec<usize>)> {
        let (oh, ow) = self.output_dims(h, w)?;
        if x.len() != c * h * w {
            return Err(Error::shape("max-pool input length mismatch"));
        }
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut idx = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            let base = ch * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + (2 * oy) * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let j = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x[j] > x[best] {
                            best = j;
                        }
                    }
                    out.push(x[best]);
                    idx.push(best);
                }
            }
        }
        Ok((out, idx))
    }

    /// Routes each upstream gradient to its window's argmax.
    pub fn backward(&self, dout: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
        let mut dx = vec![0.0; input_len];
        for (&d, &j) in dout.iter().zip(argmax) {
            dx[j] += d;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_maximum() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = PoolSpec::default().apply(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx, vec![3]);
    }

    #[test]
    fn constant_input_constant_output() {
        let x = Tensor::full(&[2, 4, 6], 1.5);
        let (y, _) = PoolSpec::default().apply(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2, 3]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn odd_dims_rejected_or_floored() {
        let x = Tensor::full(&[1, 5, 4], 1.0);
        assert!(matches!(PoolSpec::default().apply(&x), Err(Error::Shape(_))));
        let (y, _) = PoolSpec::floor().apply(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
    }

    #[test]
    fn backward_routes_only_to_argmax() {
        let x = Tensor::new(vec![1, 2, 4], vec![1.0, 9.0, 0.0, -1.0, 3.0, 2.0, 5.0, 4.0]).unwrap();
        let spec = PoolSpec::default();
        let (_, idx) = spec.apply(&x).unwrap();
        let dx = spec.backward(&[10.0, 20.0], &idx, x.len());
        assert_eq!(dx, vec![0.0, 10.0, 0.0, 0.0, 0.0, 0.0, 20.0, 0.0]);
    }
}
