//! Fingertip regressor: two blocks of three convolutions with max pooling,
//! then three dense layers regressing the tip location of a 3×99×99 image.
//! Trained on synthetic renders of a capsule finger on an elliptical hand.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gestures::derive_seed;
use crate::nn::{mse, Conv2dParams, ConvCache, DenseParams, OptimState, PoolSpec, Tensor, TensorFile};

pub const IMAGE_SIDE: usize = 99;
pub const IMAGE_CHANNELS: usize = 3;
/// Tips are drawn uniformly from `[TIP_MARGIN, IMAGE_SIDE - 1 - TIP_MARGIN]²`.
pub const TIP_MARGIN: f64 = 4.0;

pub const MODEL_FORMAT: &str = "airpen-fingertip";
pub const MODEL_VERSION: &str = "fingertip-v1";

const RENDER_STREAM: u64 = 0xF1A6;
const TRAIN_STREAM: u64 = 0x7A1;
const TEST_STREAM: u64 = 0x7E5;

/// A rendered image, `C × H × W` in `[0, 1]`, with the tip in pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub pixels: Tensor,
    pub tip: (f64, f64),
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn contrast(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (p.0 - a.0 - t * vx, p.1 - a.1 - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Renders one synthetic hand. The finger is a capsule whose far segment
/// endpoint is the tip; the hand is an ellipse behind its base.
pub fn render_synthetic_hand(seed: u64) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, RENDER_STREAM, 0));
    let side = IMAGE_SIDE as f64;
    let hi = side - 1.0 - TIP_MARGIN;
    let tip = (uniform(&mut rng, TIP_MARGIN, hi), uniform(&mut rng, TIP_MARGIN, hi));

    let theta = uniform(&mut rng, 0.0, TAU);
    let (dir_y, dir_x) = theta.sin_cos();
    let finger_len = uniform(&mut rng, 22.0, 36.0);
    let radius = uniform(&mut rng, 3.5, 6.0);
    let base = (tip.0 - dir_x * finger_len, tip.1 - dir_y * finger_len);
    let semi_along = uniform(&mut rng, 14.0, 22.0);
    let semi_across = uniform(&mut rng, 10.0, 16.0);
    let palm = (base.0 - dir_x * 0.7 * semi_along, base.1 - dir_y * 0.7 * semi_along);

    let background = color(&mut rng);
    let mut skin = color(&mut rng);
    for _ in 0..64 {
        if contrast(&skin, &background) >= 0.35 {
            break;
        }
        skin = color(&mut rng);
    }
    if contrast(&skin, &background) < 0.35 {
        skin = background.map(|c| 1.0 - c);
    }
    let shade = uniform(&mut rng, 0.85, 1.0);
    let finger = skin.map(|c| (c * shade).clamp(0.0, 1.0));

    // Background texture: two plane waves plus per-pixel noise.
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            let a = uniform(&mut rng, 0.0, TAU);
            let f = uniform(&mut rng, 0.05, 0.3);
            (f * a.cos(), f * a.sin(), uniform(&mut rng, 0.0, TAU), uniform(&mut rng, 0.02, 0.08))
        })
        .collect();

    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let mut pixels = vec![0.0; IMAGE_CHANNELS * plane];
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let p = (x as f64, y as f64);
            let texture: f64 = waves
                .iter()
                .map(|&(kx, ky, phase, amp)| amp * (kx * p.0 + ky * p.1 + phase).sin())
                .sum();
            let finger_cover = (radius + 0.5 - segment_distance(p, base, tip)).clamp(0.0, 1.0);
            let (rx, ry) = (p.0 - palm.0, p.1 - palm.1);
            let along = (rx * dir_x + ry * dir_y) / semi_along;
            let across = (-rx * dir_y + ry * dir_x) / semi_across;
            let r = (along * along + across * across).sqrt();
            let palm_cover = ((1.0 - r) * semi_across.min(semi_along) + 0.5).clamp(0.0, 1.0);
            for ch in 0..IMAGE_CHANNELS {
                let noise = uniform(&mut rng, -0.04, 0.04);
                let mut v = background[ch] + texture;
                v += palm_cover * (skin[ch] - v);
                v += finger_cover * (finger[ch] - v);
                pixels[ch * plane + y * IMAGE_SIDE + x] = (v + noise).clamp(0.0, 1.0);
            }
        }
    }
    SynthImage {
        pixels: Tensor::new(vec![IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE], pixels)
            .expect("render buffer matches its shape"),
        tip,
    }
}

/// Layer sizes. [`FingertipArch::FULL`] is the 99×99 network; smaller
/// variants keep the same block structure for gradient checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingertipArch {
    pub side: usize,
    pub kernel1: usize,
    pub kernel2: usize,
    pub channels1: usize,
    pub channels2: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl FingertipArch {
    /// 99→97→95→93→46→44→42→40→20; 16·20·20 → 256 → 64 → 2.
    pub const FULL: FingertipArch = FingertipArch {
        side: IMAGE_SIDE,
        kernel1: 3,
        kernel2: 3,
        channels1: 8,
        channels2: 16,
        hidden1: 256,
        hidden2: 64,
    };

    /// 9→8→7→6→3→3→3→3→1 on a 3×9×9 input.
    pub const MINI: FingertipArch = FingertipArch {
        side: 9,
        kernel1: 2,
        kernel2: 1,
        channels1: 3,
        channels2: 4,
        hidden1: 6,
        hidden2: 5,
    };

    /// Spatial size after each block.
    fn block_sides(&self) -> Result<(usize, usize)> {
        let pool = PoolSpec::floor();
        let mut s = self.side;
        for _ in 0..3 {
            s = s.checked_sub(self.kernel1 - 1).filter(|&v| v > 0).ok_or_else(too_small)?;
        }
        let s1 = pool.output_dims(s, s)?.0;
        s = s1;
        for _ in 0..3 {
            s = s.checked_sub(self.kernel2 - 1).filter(|&v| v > 0).ok_or_else(too_small)?;
        }
        let s2 = pool.output_dims(s, s)?.0;
        Ok((s1, s2))
    }

    pub fn flat_size(&self) -> Result<usize> {
        let (_, s2) = self.block_sides()?;
        Ok(self.channels2 * s2 * s2)
    }
}

fn too_small() -> Error {
    Error::shape("input too small for the fingertip topology")
}

#[derive(Clone, Debug, PartialEq)]
pub struct FingertipNet {
    pub arch: FingertipArch,
    pub convs: Vec<Conv2dParams>,
    pub dense: Vec<DenseParams>,
}

/// What one image's pass through the convolutional trunk leaves for backprop.
struct TrunkTape {
    conv: Vec<(ConvCache, Vec<f64>)>,
    pools: [(Vec<usize>, usize); 2],
}

/// Dense-head activations for a whole batch.
struct HeadTape {
    dense_in: [Vec<f64>; 3],
    z: Vec<f64>,
}

/// Per-channel zero mean and unit variance (the `+ 0.05` keeps flat images
/// finite), so scene colour and brightness need not be learned.
fn standardize(image: &[f64]) -> Vec<f64> {
    let plane = image.len() / IMAGE_CHANNELS;
    let mut out = Vec::with_capacity(image.len());
    for ch in image.chunks_exact(plane) {
        let mean = ch.iter().sum::<f64>() / plane as f64;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / plane as f64;
        let inv = 1.0 / (var.sqrt() + 0.05);
        out.extend(ch.iter().map(|v| (v - mean) * inv));
    }
    out
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn relu_backward(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl FingertipNet {
    /// He-style uniform init for every layer, deterministic in `seed`.
    pub fn init(arch: FingertipArch, seed: u64) -> Result<Self> {
        let flat = arch.flat_size()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::with_capacity(6);
        let mut c_in = IMAGE_CHANNELS;
        for (c_out, k) in [(arch.channels1, arch.kernel1), (arch.channels2, arch.kernel2)] {
            for _ in 0..3 {
                let mut layer = Conv2dParams::init(c_in, c_out, k, &mut rng);
                layer.weight.scale(6f64.sqrt());
                convs.push(layer);
                c_in = c_out;
            }
        }
        let mut dense = Vec::with_capacity(3);
        for (i, o) in [(flat, arch.hidden1), (arch.hidden1, arch.hidden2), (arch.hidden2, 2)] {
            let mut layer = DenseParams::init(i, o, &mut rng);
            if o != 2 {
                layer.weight.scale(6f64.sqrt());
            }
            dense.push(layer);
        }
        Ok(FingertipNet { arch, convs, dense })
    }

    pub fn zeros(arch: FingertipArch) -> Result<Self> {
        let flat = arch.flat_size()?;
        let mut convs = Vec::with_capacity(6);
        let mut c_in = IMAGE_CHANNELS;
        for (c_out, k) in [(arch.channels1, arch.kernel1), (arch.channels2, arch.kernel2)] {
            for _ in 0..3 {
                convs.push(Conv2dParams::zeros(c_in, c_out, k));
                c_in = c_out;
            }
        }
        let dense = [(flat, arch.hidden1), (arch.hidden1, arch.hidden2), (arch.hidden2, 2)]
            .into_iter()
            .map(|(i, o)| DenseParams::zeros(i, o))
            .collect();
        Ok(FingertipNet { arch, convs, dense })
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::with_capacity(18);
        for c in &self.convs {
            out.extend(c.tensors());
        }
        for d in &self.dense {
            out.extend(d.tensors());
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::with_capacity(18);
        for c in &mut self.convs {
            out.extend(c.tensors_mut());
        }
        for d in &mut self.dense {
            out.extend(d.tensors_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copy of `self` with parameters replaced by `values`, in [`tensors`](Self::tensors) order.
    pub fn with_tensors(&self, values: &[Tensor]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(format!(
                "expected {} tensors, got {}",
                slots.len(),
                values.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            v.expect_shape(slot.shape())?;
            *slot = v.clone();
        }
        Ok(out)
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        let s = self.arch.side;
        image.expect_shape(&[IMAGE_CHANNELS, s, s])
    }

    fn trunk(&self, image: &[f64]) -> Result<(TrunkTape, Vec<f64>)> {
        let pool = PoolSpec::floor();
        let mut x = standardize(image);
        let mut side = self.arch.side;
        let mut channels = IMAGE_CHANNELS;
        let mut conv = Vec::with_capacity(6);
        let mut pools = Vec::with_capacity(2);
        for block in self.convs.chunks(3) {
            for layer in block {
                let (mut y, cache) = layer.forward(&x, side, side)?;
                relu(&mut y);
                side = cache.output_dims().0;
                channels = layer.c_out();
                conv.push((cache, y.clone()));
                x = y;
            }
            let (y, argmax) = pool.forward(&x, channels, side, side)?;
            pools.push((argmax, x.len()));
            side = pool.output_dims(side, side)?.0;
            x = y;
        }
        let pools = pools.try_into().expect("two pooling stages");
        Ok((TrunkTape { conv, pools }, x))
    }

    /// `features` is `batch × flat_size`.
    fn head(&self, features: Vec<f64>, batch: usize) -> HeadTape {
        let mut x = features;
        let mut dense_in: [Vec<f64>; 3] = Default::default();
        for (i, layer) in self.dense.iter().enumerate() {
            let mut y = layer.forward_batch(&x, batch);
            if i < 2 {
                relu(&mut y);
            }
            dense_in[i] = std::mem::replace(&mut x, y);
        }
        HeadTape { dense_in, z: x }
    }

    fn squash(&self, z: &[f64]) -> (f64, f64) {
        let s = self.arch.side as f64;
        (s * sigmoid(z[0]), s * sigmoid(z[1]))
    }

    /// Predicted tip in pixels, always inside `[0, side]²`.
    pub fn forward(&self, image: &Tensor) -> Result<(f64, f64)> {
        self.check_input(image)?;
        let (_, features) = self.trunk(image.data())?;
        Ok(self.squash(&self.head(features, 1).z))
    }

    /// Squared pixel error averaged over x and y, and the gradients.
    pub fn loss_and_grads(&self, image: &Tensor, tip: (f64, f64)) -> Result<(f64, FingertipNet)> {
        let mut grads = FingertipNet::zeros(self.arch)?;
        let loss = self.accumulate(&[image], &[tip], &mut grads)?;
        Ok((loss, grads))
    }

    /// Adds the batch's summed gradients to `grads` and returns the summed
    /// loss. The dense head runs on the whole batch at once, which streams
    /// its large first weight matrix once per batch instead of per image.
    fn accumulate(&self, images: &[&Tensor], tips: &[(f64, f64)], grads: &mut FingertipNet) -> Result<f64> {
        let batch = images.len();
        let mut tapes = Vec::with_capacity(batch);
        let mut features = Vec::new();
        for image in images {
            self.check_input(image)?;
            let (tape, f) = self.trunk(image.data())?;
            tapes.push(tape);
            features.extend(f);
        }
        let head = self.head(features, batch);
        let s = self.arch.side as f64;
        let mut total = 0.0;
        let mut dy = Vec::with_capacity(2 * batch);
        for (z, tip) in head.z.chunks_exact(2).zip(tips) {
            let pred = self.squash(z);
            let (loss, dpred) = mse(&[pred.0, pred.1], &[tip.0, tip.1]);
            total += loss;
            dy.extend(z.iter().zip(&dpred).map(|(&z, &d)| {
                let g = sigmoid(z);
                d * s * g * (1.0 - g)
            }));
        }
        for i in (0..3).rev() {
            dy = self.dense[i].backward_batch(&head.dense_in[i], &dy, batch, &mut grads.dense[i]);
            if i > 0 {
                relu_backward(&mut dy, &head.dense_in[i]);
            }
        }
        let pool = PoolSpec::floor();
        let flat = dy.len() / batch;
        for (tape, d) in tapes.iter().zip(dy.chunks_exact(flat)) {
            let mut dy = d.to_vec();
            for block in (0..2).rev() {
                let (argmax, len) = &tape.pools[block];
                dy = pool.backward(&dy, argmax, *len);
                for layer in (block * 3..block * 3 + 3).rev() {
                    let (cache, activated) = &tape.conv[layer];
                    relu_backward(&mut dy, activated);
                    match self.convs[layer].backward(cache, &dy, &mut grads.convs[layer], layer > 0) {
                        Some(dx) => dy = dx,
                        None => break,
                    }
                }
            }
        }
        Ok(total)
    }

    pub fn to_file(&self, config: &FingertipTrainConfig, loss_history: &[f64]) -> TensorFile {
        let mut file = TensorFile::new(MODEL_FORMAT, MODEL_VERSION);
        file.set_header("arch", serde_json::to_value(self.arch).expect("arch serializes"));
        file.set_header("train", serde_json::to_value(config).expect("config serializes"));
        file.set_header("loss_history", loss_history.to_vec());
        for (i, c) in self.convs.iter().enumerate() {
            file.push(&format!("conv{i}.weight"), &c.weight);
            file.push(&format!("conv{i}.bias"), &c.bias);
        }
        for (i, d) in self.dense.iter().enumerate() {
            file.push(&format!("dense{i}.weight"), &d.weight);
            file.push(&format!("dense{i}.bias"), &d.bias);
        }
        file
    }

    pub fn from_file(file: &TensorFile) -> Result<Self> {
        let arch: FingertipArch = serde_json::from_value(file.header_value("arch")?.clone())
            .map_err(|e| Error::Model(format!("bad arch header: {e}")))?;
        let mut net = FingertipNet::zeros(arch)?;
        for (i, c) in net.convs.iter_mut().enumerate() {
            *c = Conv2dParams::new(file.get(&format!("conv{i}.weight"))?, file.get(&format!("conv{i}.bias"))?, 1)?;
        }
        for (i, d) in net.dense.iter_mut().enumerate() {
            *d = DenseParams::new(file.get(&format!("dense{i}.weight"))?, file.get(&format!("dense{i}.bias"))?)?;
        }
        let expected = FingertipNet::zeros(arch)?;
        for (a, b) in net.tensors().iter().zip(expected.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Model(format!(
                    "tensor shape {:?} does not match the declared architecture ({:?})",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path, config: &FingertipTrainConfig, loss_history: &[f64]) -> Result<()> {
        self.to_file(config, loss_history).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(&TensorFile::load(path, MODEL_FORMAT, MODEL_VERSION)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FingertipTrainConfig {
    pub arch: FingertipArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FingertipTrainConfig {
    fn default() -> Self {
        FingertipTrainConfig {
            arch: FingertipArch::FULL,
            epochs: 20,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 7,
        }
    }
}

/// Seed of the `index`-th training render.
pub fn train_render_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, TRAIN_STREAM, index as u64)
}

/// Seed of the `index`-th held-out render; disjoint stream from training.
pub fn test_render_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, TEST_STREAM, index as u64)
}

pub struct FingertipTraining {
    pub net: FingertipNet,
    pub loss_history: Vec<f64>,
}

/// Adam with cosine learning-rate decay on mean squared pixel error over
/// `n_train` renders, reshuffled each epoch, each drawn under a random
/// [`dihedral`] symmetry. Images are
/// re-rendered per batch rather than held in memory.
pub fn fingertip_train(config: &FingertipTrainConfig, n_train: usize) -> Result<FingertipTraining> {
    if n_train < 100 {
        return Err(Error::invalid(format!("n_train must be at least 100, got {n_train}")));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("epochs and batch_size must be positive"));
    }
    if config.arch.side != IMAGE_SIDE {
        return Err(Error::invalid("training renders are 99×99; use the full-size architecture"));
    }
    let mut net = FingertipNet::init(config.arch, config.seed)?;
    let mut optim = OptimState::adam(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xF1_7E);
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let total_steps = (config.epochs * n_train.div_ceil(config.batch_size)) as f64;
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            // Cosine decay from the configured rate towards zero.
            let progress = optim.steps() as f64 / total_steps;
            optim.learning_rate = config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            let mut grads = FingertipNet::zeros(config.arch)?;
            let renders: Vec<SynthImage> = batch
                .iter()
                .map(|&i| dihedral(&render_synthetic_hand(train_render_seed(config.seed, i)), rng.random_range(0..8)))
                .collect();
            let images: Vec<&Tensor> = renders.iter().map(|r| &r.pixels).collect();
            let tips: Vec<(f64, f64)> = renders.iter().map(|r| r.tip).collect();
            total += net.accumulate(&images, &tips, &mut grads)?;
            let inv = 1.0 / batch.len() as f64;
            let mut g = grads.tensors_mut();
            for t in g.iter_mut() {
                t.scale(inv);
            }
            let g: Vec<&Tensor> = g.into_iter().map(|t| &*t).collect();
            optim.step(&mut net.tensors_mut(), &g)?;
        }
        let mean = total / n_train as f64;
        if !mean.is_finite() {
            return Err(Error::Numeric(format!("fingertip loss diverged at epoch {epoch}")));
        }
        history.push(mean);
    }
    Ok(FingertipTraining {
        net,
        loss_history: history,
    })
}

/// One of the eight symmetries of the square: bit 0 flips x, bit 1 flips y,
/// bit 2 transposes. The render distribution is invariant under all of them.
pub fn dihedral(img: &SynthImage, code: u8) -> SynthImage {
    let shape = img.pixels.shape();
    let (c, side) = (shape[0], shape[1]);
    let last = (side - 1) as f64;
    let map = |x: usize, y: usize| -> (usize, usize) {
        let (mut x, mut y) = (x, y);
        if code & 1 != 0 {
            x = side - 1 - x;
        }
        if code & 2 != 0 {
            y = side - 1 - y;
        }
        if code & 4 != 0 {
            (y, x)
        } else {
            (x, y)
        }
    };
    let src = img.pixels.data();
    let mut out = vec![0.0; src.len()];
    let plane = side * side;
    for ch in 0..c {
        for y in 0..side {
            for x in 0..side {
                let (nx, ny) = map(x, y);
                out[ch * plane + ny * side + nx] = src[ch * plane + y * side + x];
            }
        }
    }
    let (mut tx, mut ty) = img.tip;
    if code & 1 != 0 {
        tx = last - tx;
    }
    if code & 2 != 0 {
        ty = last - ty;
    }
    if code & 4 != 0 {
        std::mem::swap(&mut tx, &mut ty);
    }
    SynthImage {
        pixels: Tensor::new(shape.to_vec(), out).expect("same shape"),
        tip: (tx, ty),
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

/// Euclidean pixel errors of `predict` on `n_test` held-out renders.
pub fn test_errors<F>(mut predict: F, n_test: usize, seed: u64) -> Result<Vec<f64>>
where
    F: FnMut(&SynthImage) -> Result<(f64, f64)>,
{
    (0..n_test)
        .map(|i| {
            let img = render_synthetic_hand(test_render_seed(seed, i));
            let (x, y) = predict(&img)?;
            Ok(((x - img.tip.0).powi(2) + (y - img.tip.1).powi(2)).sqrt())
        })
        .collect()
}

/// Fraction of held-out renders whose tip error is within `threshold_px`.
pub fn success_rate(net: &FingertipNet, n_test: usize, seed: u64, threshold_px: f64) -> Result<f64> {
    if !(threshold_px > 0.0) {
        return Err(Error::invalid("threshold must be positive"));
    }
    let errors = test_errors(|img| net.forward(&img.pixels), n_test, seed)?;
    Ok(rate_within(&errors, threshold_px))
}

fn rate_within(errors: &[f64], threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|&&e| e <= threshold).count() as f64 / errors.len() as f64
}

/// Success rate at integer pixel thresholds 1..=20.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub thresholds: Vec<f64>,
    pub success_rate: Vec<f64>,
}

impl SuccessCurve {
    pub fn from_errors(errors: &[f64]) -> Self {
        let thresholds: Vec<f64> = (1..=20).map(f64::from).collect();
        let success_rate = thresholds.iter().map(|&t| rate_within(errors, t)).collect();
        SuccessCurve {
            thresholds,
            success_rate,
        }
    }

    pub fn at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.success_rate[i])
    }
}
