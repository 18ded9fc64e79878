//! Valid (pad-free) 2-D cross-correlation, computed directly row by row.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Kernels `C_out × C_in × k × k`, bias `C_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv2dParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s[2] != s[3] {
            return Err(Error::shape(format!("conv kernel must be C_out×C_in×k×k, got {s:?}")));
        }
        if stride == 0 {
            return Err(Error::invalid("stride must be positive"));
        }
        bias.expect_shape(&[s[0]])?;
        Ok(Conv2dParams {
            weight,
            bias,
            stride,
        })
    }

    pub fn zeros(c_in: usize, c_out: usize, k: usize) -> Self {
        Conv2dParams {
            weight: Tensor::zeros(&[c_out, c_in, k, k]),
            bias: Tensor::zeros(&[c_out]),
            stride: 1,
        }
    }

    /// Uniform ±1/√(C_in·k²) kernels, zero bias, stride 1.
    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, rng: &mut R) -> Self {
        let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
        Conv2dParams {
            weight: Tensor::uniform(&[c_out, c_in, k, k], bound, rng),
            bias: Tensor::zeros(&[c_out]),
            stride: 1,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zeros_like(&self) -> Self {
        Conv2dParams {
            weight: Tensor::zeros_like(&self.weight),
            bias: Tensor::zeros_like(&self.bias),
            stride: self.stride,
        }
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        if h < k || w < k {
            return Err(Error::shape(format!("kernel {k}×{k} larger than input {h}×{w}")));
        }
        Ok(((h - k) / self.stride + 1, (w - k) / self.stride + 1))
    }

    /// `x` is `C_in × H × W`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 3 || s[0] != self.c_in() {
            return Err(Error::shape(format!(
                "conv expects {}×H×W input, got {s:?}",
                self.c_in()
            )));
        }
        let (out, _) = self.forward(x.data(), s[1], s[2])?;
        let (oh, ow) = self.output_dims(s[1], s[2])?;
        Tensor::new(vec![self.c_out(), oh, ow], out)
    }

    /// Returns the output and what [`backward`](Self::backward) needs.
    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> Result<(Vec<f64>, ConvCache)> {
        let (oh, ow) = self.output_dims(h, w)?;
        let ci = self.c_in();
        if x.len() != ci * h * w {
            return Err(Error::shape(format!(
                "conv input needs {} values, got {}",
                ci * h * w,
                x.len()
            )));
        }
        let dims = Dims {
            ci,
            co: self.c_out(),
            k: self.kernel(),
            s: self.stride,
            h,
            w,
            oh,
            ow,
        };
        let mut out = vec![0.0; dims.co * oh * ow];
        dispatch!(forward_rows(&dims, x, self.weight.data(), self.bias.data(), &mut out));
        Ok((
            out,
            ConvCache {
                input: x.to_vec(),
                dims,
            },
        ))
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `need_input_grad`.
    pub fn backward(
        &self,
        cache: &ConvCache,
        dout: &[f64],
        grads: &mut Conv2dParams,
        need_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let d = &cache.dims;
        assert_eq!(dout.len(), d.co * d.oh * d.ow, "conv dout size");
        for (g, plane) in grads.bias.data_mut().iter_mut().zip(dout.chunks_exact(d.oh * d.ow)) {
            *g += plane.iter().sum::<f64>();
        }
        let mut dx = vec![0.0; if need_input_grad { d.ci * d.h * d.w } else { 0 }];
        dispatch!(backward_rows(
            d,
            &cache.input,
            self.weight.data(),
            dout,
            grads.weight.data_mut(),
            &mut dx
        ));
        need_input_grad.then_some(dx)
    }
}

/// Layer input kept from the forward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    input: Vec<f64>,
    dims: Dims,
}

impl ConvCache {
    pub fn output_dims(&self) -> (usize, usize) {
        (self.dims.oh, self.dims.ow)
    }
}

#[derive(Clone, Copy, Debug)]
struct Dims {
    ci: usize,
    co: usize,
    k: usize,
    s: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

// The row loops are compiled twice: once for the baseline target and once
// with AVX2/FMA enabled, picked at runtime. Neither uses fused multiply-add
// explicitly, so both give bit-identical results.
macro_rules! dispatch {
    ($f:ident($($arg:expr),* $(,)?)) => {{
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
                // SAFETY: the required CPU features were just detected.
                unsafe { simd::$f($($arg),*) }
            } else {
                $f($($arg),*)
            }
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            $f($($arg),*)
        }
    }};
}
use dispatch;

#[cfg(target_arch = "x86_64")]
mod simd {
    use super::Dims;

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn forward_rows(d: &Dims, x: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
        super::forward_rows(d, x, weight, bias, out)
    }

    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn backward_rows(d: &Dims, x: &[f64], weight: &[f64], dout: &[f64], gw: &mut [f64], dx: &mut [f64]) {
        super::backward_rows(d, x, weight, dout, gw, dx)
    }
}

#[inline(always)]
fn forward_rows(d: &Dims, x: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let Dims { ci, k, s, h, w, oh, ow, .. } = *d;
    for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
        plane.fill(bias[o]);
        for (oy, row) in plane.chunks_exact_mut(ow).enumerate() {
            for c in 0..ci {
                let taps = &weight[(o * ci + c) * k * k..][..k * k];
                let top = (c * h + oy * s) * w;
                match (k, s) {
                    (3, 1) => taps_block::<3>(row, taps, &x[top..], w),
                    (2, 1) => taps_block::<2>(row, taps, &x[top..], w),
                    _ => {
                        for ky in 0..k {
                            for kx in 0..k {
                                axpy(row, taps[ky * k + kx], &x[top + ky * w + kx..], s);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn backward_rows(d: &Dims, x: &[f64], weight: &[f64], dout: &[f64], gw: &mut [f64], dx: &mut [f64]) {
    let Dims { ci, co, k, s, h, w, oh, ow } = *d;
    for (o, plane) in dout.chunks_exact(oh * ow).enumerate() {
        for (oy, row) in plane.chunks_exact(ow).enumerate() {
            for c in 0..ci {
                let g = &mut gw[(o * ci + c) * k * k..][..k * k];
                let top = (c * h + oy * s) * w;
                match (k, s) {
                    (3, 1) => dots_block::<3>(g, row, &x[top..], w),
                    (2, 1) => dots_block::<2>(g, row, &x[top..], w),
                    _ => {
                        for ky in 0..k {
                            for kx in 0..k {
                                g[ky * k + kx] += dot(row, &x[top + ky * w + kx..], s);
                            }
                        }
                    }
                }
            }
        }
    }
    if dx.is_empty() {
        return;
    }
    if s == 1 && k > 1 {
        // dL/dx is the correlation of the zero-padded output gradient with
        // the flipped kernels, channels swapped: a forward pass in disguise.
        let (ph, pw) = (oh + 2 * (k - 1), ow + 2 * (k - 1));
        let mut padded = vec![0.0; co * ph * pw];
        for (o, plane) in dout.chunks_exact(oh * ow).enumerate() {
            for (oy, row) in plane.chunks_exact(ow).enumerate() {
                let at = (o * ph + oy + k - 1) * pw + k - 1;
                padded[at..at + ow].copy_from_slice(row);
            }
        }
        let mut flipped = vec![0.0; ci * co * k * k];
        for o in 0..co {
            for c in 0..ci {
                for t in 0..k * k {
                    flipped[(c * co + o) * k * k + k * k - 1 - t] = weight[(o * ci + c) * k * k + t];
                }
            }
        }
        let t = Dims {
            ci: co,
            co: ci,
            k,
            s: 1,
            h: ph,
            w: pw,
            oh: h,
            ow: w,
        };
        forward_rows(&t, &padded, &flipped, &vec![0.0; ci], dx);
        return;
    }
    for (o, plane) in dout.chunks_exact(oh * ow).enumerate() {
        for (oy, row) in plane.chunks_exact(ow).enumerate() {
            for c in 0..ci {
                for ky in 0..k {
                    for kx in 0..k {
                        let wi = ((o * ci + c) * k + ky) * k + kx;
                        scatter(&mut dx[(c * h + oy * s + ky) * w + kx..], weight[wi], row, s);
                    }
                }
            }
        }
    }
}

/// `acc[j] += Σ taps[ky·K + kx] · src[ky·w + j + kx]` over all K×K taps in
/// one pass along the row.
#[inline(always)]
#[allow(clippy::needless_range_loop)]
fn taps_block<const K: usize>(acc: &mut [f64], taps: &[f64], src: &[f64], w: usize) {
    let n = acc.len();
    assert!(taps.len() == K * K && n + K - 1 <= w && src.len() >= (K - 1) * w + n + K - 1);
    let mut t = [[0.0; K]; K];
    for (ky, row) in t.iter_mut().enumerate() {
        row.copy_from_slice(&taps[ky * K..(ky + 1) * K]);
    }
    for j in 0..n {
        // SAFETY: j < n and the assert above bounds every index below.
        unsafe {
            let mut v = *acc.get_unchecked(j);
            for ky in 0..K {
                for kx in 0..K {
                    v += t[ky][kx] * *src.get_unchecked(ky * w + j + kx);
                }
            }
            *acc.get_unchecked_mut(j) = v;
        }
    }
}

/// `g[ky·K + kx] += Σ_j row[j] · src[ky·w + j + kx]`, four partial sums per
/// tap so the loop vectorizes without reassociation.
#[inline(always)]
#[allow(clippy::needless_range_loop)]
fn dots_block<const K: usize>(g: &mut [f64], row: &[f64], src: &[f64], w: usize) {
    let n = row.len();
    assert!(g.len() == K * K && n + K - 1 <= w && src.len() >= (K - 1) * w + n + K - 1);
    let mut acc = [[[0.0; 4]; K]; K];
    let split = n / 4 * 4;
    for j in (0..split).step_by(4) {
        for ky in 0..K {
            for kx in 0..K {
                for i in 0..4 {
                    // SAFETY: j + i < n and the assert above bounds the source index.
                    unsafe {
                        acc[ky][kx][i] += *row.get_unchecked(j + i) * *src.get_unchecked(ky * w + j + i + kx);
                    }
                }
            }
        }
    }
    for ky in 0..K {
        for kx in 0..K {
            let a = &acc[ky][kx];
            let tail: f64 = (split..n).map(|j| row[j] * src[ky * w + j + kx]).sum();
            g[ky * K + kx] += (a[0] + a[1]) + (a[2] + a[3]) + tail;
        }
    }
}

/// `acc[j] += a * src[j * stride]`.
#[inline(always)]
fn axpy(acc: &mut [f64], a: f64, src: &[f64], stride: usize) {
    if stride == 1 {
        let n = acc.len();
        for (o, &v) in acc.iter_mut().zip(&src[..n]) {
            *o += a * v;
        }
    } else {
        for (j, o) in acc.iter_mut().enumerate() {
            *o += a * src[j * stride];
        }
    }
}

/// `dst[j * stride] += a * row[j]`.
#[inline(always)]
fn scatter(dst: &mut [f64], a: f64, row: &[f64], stride: usize) {
    if stride == 1 {
        for (d, &v) in dst[..row.len()].iter_mut().zip(row) {
            *d += a * v;
        }
    } else {
        for (j, &v) in row.iter().enumerate() {
            dst[j * stride] += a * v;
        }
    }
}

/// `Σ row[j] · src[j * stride]`, with four partial sums so the unit-stride
/// case vectorizes without reassociating a single accumulator.
#[inline(always)]
fn dot(row: &[f64], src: &[f64], stride: usize) -> f64 {
    if stride != 1 {
        return row.iter().enumerate().map(|(j, v)| v * src[j * stride]).sum();
    }
    let src = &src[..row.len()];
    let mut acc = [0.0; 4];
    let split = row.len() / 4 * 4;
    for (a, b) in row[..split].chunks_exact(4).zip(src[..split].chunks_exact(4)) {
        for i in 0..4 {
            acc[i] += a[i] * b[i];
        }
    }
    let tail: f64 = row[split..].iter().zip(&src[split..]).map(|(a, b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
