//! Convolutional binary classifier with exact backpropagation.
//!
//! Activations are batched `n x H x W x C` arrays (channel-last, matching
//! [`Frame`](crate::frame::Frame)). Convolutions are lowered to matrix products
//! through an im2col buffer. Conv kernels are stored as `(9 * C_in) x C_out`
//! matrices whose row index is `(ky * 3 + kx) * C_in + c_in`; dense weights
//! are `inputs x outputs`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::arch::{DetectorArchitecture, LayerSpec, NUM_CLASSES};
use super::real::{gemm, Real};
use super::DetectorError;
use crate::exec::Execution;
use crate::frame::FrameLabel;

/// Samples per gradient work unit. Fixed so that the reduction order, and
/// therefore the result, does not depend on the thread count.
pub const GRAD_CHUNK: usize = 8;

/// Flat parameter tensors, ordered `[w0, b0, w1, b1, ...]` by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    tensors: Vec<Vec<T>>,
}

impl<T: Real> Params<T> {
    pub fn new(tensors: Vec<Vec<T>>) -> Self {
        Self { tensors }
    }

    pub fn zeros_for(arch: &DetectorArchitecture) -> Self {
        let tensors = arch
            .layers()
            .iter()
            .flat_map(|l| {
                let (w, b) = l.param_counts();
                [vec![T::zero(); w], vec![T::zero(); b]]
            })
            .collect();
        Self { tensors }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Vec<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Vec<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Vec<T>> {
        self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_shape(&self, other: &Params<T>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.len() == b.len())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|v| v.is_finite())
    }

    fn add_assign(&mut self, other: &Params<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    fn scale(&mut self, s: T) {
        for v in self.tensors.iter_mut().flatten() {
            *v = *v * s;
        }
    }

    /// Value at flat position `i` across all tensors.
    pub fn get_flat(&self, mut i: usize) -> T {
        for t in &self.tensors {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, v: T) {
        for t in &mut self.tensors {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }
}

/// Mean loss, accuracy and parameter gradients for one batch.
#[derive(Debug, Clone)]
pub struct LossAndGrads<T> {
    pub loss: f64,
    pub correct: usize,
    pub grads: Params<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    arch: DetectorArchitecture,
    params: Params<T>,
}

enum Cache<T> {
    Conv {
        cols: Vec<T>,
        act: Vec<T>,
        argmax: Vec<u32>,
        h: usize,
        w: usize,
    },
    Dense {
        input: Vec<T>,
        output: Vec<T>,
    },
}

impl<T: Real> Network<T> {
    /// Fan-in scaled Gaussian initialisation: variance `2 / fan_in` for layers
    /// followed by a rectifier, `1 / fan_in` for the linear output layer.
    /// Biases start at zero. Values are drawn in `f64` so `f32` and `f64`
    /// networks from the same stream agree up to rounding.
    pub fn init<R: Rng + ?Sized>(arch: DetectorArchitecture, rng: &mut R) -> Self {
        let mut tensors = Vec::with_capacity(2 * arch.layers().len());
        for layer in arch.layers() {
            let (wc, bc) = layer.param_counts();
            let gain = match layer {
                LayerSpec::Dense { relu: false, .. } => 1.0,
                _ => 2.0,
            };
            let std = (gain / layer.fan_in() as f64).sqrt();
            let w = (0..wc)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    T::from_f64_lossy(z * std)
                })
                .collect();
            tensors.push(w);
            tensors.push(vec![T::zero(); bc]);
        }
        Self {
            arch,
            params: Params { tensors },
        }
    }

    pub fn from_params(
        arch: DetectorArchitecture,
        params: Params<T>,
    ) -> Result<Self, DetectorError> {
        let expected = Params::<T>::zeros_for(&arch);
        if !expected.same_shape(&params) {
            return Err(DetectorError::ParamShape);
        }
        if !params.is_finite() {
            return Err(DetectorError::NonFiniteWeights);
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &DetectorArchitecture {
        &self.arch
    }

    pub fn params(&self) -> &Params<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<T> {
        &mut self.params
    }

    /// Convert element type, e.g. an `f32` model to `f64` for checking.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            params: Params {
                tensors: self
                    .params
                    .tensors
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                            .collect()
                    })
                    .collect(),
            },
        }
    }

    fn check_input(&self, input: &[T], n: usize) -> Result<(), DetectorError> {
        let expected = n * self.arch.input_len();
        if input.len() != expected {
            return Err(DetectorError::InputShape {
                expected,
                actual: input.len(),
            });
        }
        Ok(())
    }

    /// Softmax class probabilities `[p_clean, p_adversarial]` for `n` samples
    /// stored back to back in `input`.
    pub fn forward(
        &self,
        input: &[T],
        n: usize,
        exec: Execution,
    ) -> Result<Vec<[f64; NUM_CLASSES]>, DetectorError> {
        self.check_input(input, n)?;
        let per = self.arch.input_len();
        let chunks = n.div_ceil(GRAD_CHUNK);
        let parts = exec.map_range(chunks, |c| {
            let start = c * GRAD_CHUNK;
            let len = GRAD_CHUNK.min(n - start);
            let (logits, _) =
                self.run_forward(&input[start * per..(start + len) * per], len, false);
            logits
                .chunks_exact(NUM_CLASSES)
                .map(|z| softmax(z))
                .collect::<Vec<_>>()
        });
        Ok(parts.into_iter().flatten().collect())
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grads(
        &self,
        input: &[T],
        labels: &[FrameLabel],
        exec: Execution,
    ) -> Result<LossAndGrads<T>, DetectorError> {
        let n = labels.len();
        if n == 0 {
            return Err(DetectorError::EmptyBatch);
        }
        self.check_input(input, n)?;
        let per = self.arch.input_len();
        let chunks = n.div_ceil(GRAD_CHUNK);
        let parts = exec.map_range(chunks, |c| {
            let start = c * GRAD_CHUNK;
            let len = GRAD_CHUNK.min(n - start);
            self.chunk_grads(
                &input[start * per..(start + len) * per],
                &labels[start..start + len],
            )
        });
        let mut iter = parts.into_iter();
        let (mut loss, mut correct, mut grads) = iter.next().expect("at least one chunk");
        for (l, c, g) in iter {
            loss += l;
            correct += c;
            grads.add_assign(&g);
        }
        grads.scale(T::one() / T::from_f64_lossy(n as f64));
        Ok(LossAndGrads {
            loss: loss / n as f64,
            correct,
            grads,
        })
    }

    /// Summed loss, correct count and summed gradients for one chunk.
    fn chunk_grads(&self, input: &[T], labels: &[FrameLabel]) -> (f64, usize, Params<T>) {
        let n = labels.len();
        let (logits, caches) = self.run_forward(input, n, true);
        let mut loss = 0.0;
        let mut correct = 0;
        let mut delta = vec![T::zero(); n * NUM_CLASSES];
        for (i, label) in labels.iter().enumerate() {
            let z = &logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES];
            let y = label.as_index();
            let lse = log_sum_exp(z);
            loss += lse - z[y].to_f64_lossy();
            let pred = if z[1] > z[0] { 1 } else { 0 };
            if pred == y {
                correct += 1;
            }
            for k in 0..NUM_CLASSES {
                let p = (z[k].to_f64_lossy() - lse).exp();
                let target = if k == y { 1.0 } else { 0.0 };
                delta[i * NUM_CLASSES + k] = T::from_f64_lossy(p - target);
            }
        }
        let grads = self.run_backward(n, caches, delta);
        (loss, correct, grads)
    }

    fn run_forward(&self, input: &[T], n: usize, keep: bool) -> (Vec<T>, Vec<Cache<T>>) {
        let mut x = input.to_vec();
        let mut caches = Vec::with_capacity(self.arch.layers().len());
        let conv_sizes = self.arch.conv_input_sizes();
        let mut conv_idx = 0;
        for (li, layer) in self.arch.layers().iter().enumerate() {
            let weights = &self.params.tensors[2 * li];
            let bias = &self.params.tensors[2 * li + 1];
            match *layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                } => {
                    let (h, w) = conv_sizes[conv_idx];
                    conv_idx += 1;
                    let cols = im2col(&x, n, h, w, in_channels);
                    let rows = n * h * w;
                    let mut act = vec![T::zero(); rows * out_channels];
                    gemm(
                        rows,
                        9 * in_channels,
                        out_channels,
                        &cols,
                        false,
                        weights,
                        false,
                        &mut act,
                        false,
                    );
                    for row in act.chunks_exact_mut(out_channels) {
                        for (v, b) in row.iter_mut().zip(bias) {
                            *v = (*v + *b).max(T::zero());
                        }
                    }
                    let (pooled, argmax) = max_pool(&act, n, h, w, out_channels);
                    x = pooled;
                    if keep {
                        caches.push(Cache::Conv {
                            cols,
                            act,
                            argmax,
                            h,
                            w,
                        });
                    }
                }
                LayerSpec::Dense {
                    inputs,
                    outputs,
                    relu,
                } => {
                    let mut out = vec![T::zero(); n * outputs];
                    gemm(
                        n, inputs, outputs, &x, false, weights, false, &mut out, false,
                    );
                    for row in out.chunks_exact_mut(outputs) {
                        for (v, b) in row.iter_mut().zip(bias) {
                            *v += *b;
                            if relu {
                                *v = v.max(T::zero());
                            }
                        }
                    }
                    let input = std::mem::replace(&mut x, out);
                    if keep {
                        caches.push(Cache::Dense {
                            input,
                            output: x.clone(),
                        });
                    }
                }
            }
        }
        (x, caches)
    }

    fn run_backward(&self, n: usize, caches: Vec<Cache<T>>, mut delta: Vec<T>) -> Params<T> {
        let mut grads = self.params.zeros_like();
        let layers = self.arch.layers();
        for (li, cache) in caches.into_iter().enumerate().rev() {
            let weights = &self.params.tensors[2 * li];
            let need_input_grad = li > 0;
            match (layers[li], cache) {
                (
                    LayerSpec::Dense {
                        inputs,
                        outputs,
                        relu,
                    },
                    Cache::Dense { input, output },
                ) => {
                    if relu {
                        for (d, y) in delta.iter_mut().zip(&output) {
                            if *y <= T::zero() {
                                *d = T::zero();
                            }
                        }
                    }
                    let (gw, gb) = split_pair(&mut grads.tensors, li);
                    gemm(inputs, n, outputs, &input, true, &delta, false, gw, false);
                    for row in delta.chunks_exact(outputs) {
                        for (g, d) in gb.iter_mut().zip(row) {
                            *g += *d;
                        }
                    }
                    if need_input_grad {
                        let mut dx = vec![T::zero(); n * inputs];
                        gemm(
                            n, outputs, inputs, &delta, false, weights, true, &mut dx, false,
                        );
                        delta = dx;
                    }
                }
                (
                    LayerSpec::Conv {
                        in_channels,
                        out_channels,
                    },
                    Cache::Conv {
                        cols,
                        act,
                        argmax,
                        h,
                        w,
                    },
                ) => {
                    let rows = n * h * w;
                    let mut dpre = vec![T::zero(); rows * out_channels];
                    for (d, &idx) in delta.iter().zip(&argmax) {
                        dpre[idx as usize] = *d;
                    }
                    for (d, a) in dpre.iter_mut().zip(&act) {
                        if *a <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    let k = 9 * in_channels;
                    let (gw, gb) = split_pair(&mut grads.tensors, li);
                    gemm(k, rows, out_channels, &cols, true, &dpre, false, gw, false);
                    for row in dpre.chunks_exact(out_channels) {
                        for (g, d) in gb.iter_mut().zip(row) {
                            *g += *d;
                        }
                    }
                    if need_input_grad {
                        let mut dcols = vec![T::zero(); rows * k];
                        gemm(
                            rows,
                            out_channels,
                            k,
                            &dpre,
                            false,
                            weights,
                            true,
                            &mut dcols,
                            false,
                        );
                        delta = col2im(&dcols, n, h, w, in_channels);
                    }
                }
                _ => unreachable!("cache kind follows layer kind"),
            }
        }
        grads
    }
}

fn split_pair<T>(tensors: &mut [Vec<T>], layer: usize) -> (&mut [T], &mut [T]) {
    let (a, b) = tensors[2 * layer..2 * layer + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

fn log_sum_exp<T: Real>(z: &[T]) -> f64 {
    let m = z
        .iter()
        .map(|v| v.to_f64_lossy())
        .fold(f64::NEG_INFINITY, f64::max);
    m + z
        .iter()
        .map(|v| (v.to_f64_lossy() - m).exp())
        .sum::<f64>()
        .ln()
}

fn softmax<T: Real>(z: &[T]) -> [f64; NUM_CLASSES] {
    let lse = log_sum_exp(z);
    [
        (z[0].to_f64_lossy() - lse).exp(),
        (z[1].to_f64_lossy() - lse).exp(),
    ]
}

/// `n x h x w x c` -> `(n*h*w) x (9*c)` patches for a 3x3 kernel, zero padded.
fn im2col<T: Real>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut cols = vec![T::zero(); n * h * w * k];
    for s in 0..n {
        let img = &x[s * h * w * c..(s + 1) * h * w * c];
        for y in 0..h {
            for xx in 0..w {
                let row = &mut cols[((s * h + y) * w + xx) * k..][..k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = (sy as usize * w + sx as usize) * c;
                        let dst = (ky * 3 + kx) * c;
                        row[dst..dst + c].copy_from_slice(&img[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(cols: &[T], n: usize, h: usize, w: usize, c: usize) -> Vec<T> {
    let k = 9 * c;
    let mut x = vec![T::zero(); n * h * w * c];
    for s in 0..n {
        let img = &mut x[s * h * w * c..(s + 1) * h * w * c];
        for y in 0..h {
            for xx in 0..w {
                let row = &cols[((s * h + y) * w + xx) * k..][..k];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let dst = (sy as usize * w + sx as usize) * c;
                        let src = (ky * 3 + kx) * c;
                        for (d, v) in img[dst..dst + c].iter_mut().zip(&row[src..src + c]) {
                            *d += *v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// 2x2 max-pool. Returns the pooled map and, per output element, the flat
/// index of the winning input element (first maximum on ties).
fn max_pool<T: Real>(x: &[T], n: usize, h: usize, w: usize, c: usize) -> (Vec<T>, Vec<u32>) {
    let (ph, pw) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * ph * pw * c);
    let mut idx = Vec::with_capacity(n * ph * pw * c);
    for s in 0..n {
        for py in 0..ph {
            for px in 0..pw {
                for ch in 0..c {
                    let mut best = ((s * h + 2 * py) * w + 2 * px) * c + ch;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = ((s * h + 2 * py + dy) * w + 2 * px + dx) * c + ch;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                    out.push(x[best]);
                    idx.push(best as u32);
                }
            }
        }
    }
    (out, idx)
}
