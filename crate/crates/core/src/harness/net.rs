//! A tiny 3D convolutional network with hand-written backpropagation.
//!
//! Three 3×3×3 same-padded convolutions with ReLU in between. Activations are
//! channel-major, `x` fastest within a channel.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::volume::Dims;
use crate::{Error, Result};

/// Floating-point type the network runs in.
pub trait Scalar: Float + Default + Send + Sync + std::fmt::Debug + 'static {
    const DTYPE: Precision;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Precision = Precision::F32;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    const DTYPE: Precision = Precision::F64;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Precision {
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" | "single" => Ok(Self::F32),
            "f64" | "double" => Ok(Self::F64),
            other => Err(Error::InvalidArgument(format!("unknown precision {other:?}"))),
        }
    }
}

const K: usize = 27;

/// Subtracted from every input value before the first convolution, so inputs
/// normalised to `[0, 1]` enter the network centred on zero.
pub const INPUT_CENTER: f64 = 0.5;

/// Voxels processed per cache block in the convolution loops.
const BLOCK: usize = 2048;

#[inline]
fn kernel_offset(k: usize) -> (isize, isize, isize) {
    ((k % 3) as isize - 1, ((k / 3) % 3) as isize - 1, (k / 9) as isize - 1)
}

/// Grid with one voxel of zero padding on every side.
///
/// Each kernel tap becomes a constant offset into the flat padded buffer, so
/// a convolution is 27 shifted multiply-adds over one contiguous span.
/// Positions in the span that are padding get garbage and are re-zeroed.
#[derive(Clone, Debug)]
struct Padded {
    dims: Dims,
    len: usize,
    start: usize,
    end: usize,
    offsets: [isize; K],
    interior: Vec<bool>,
}

impl Padded {
    fn new(dims: Dims) -> Self {
        let (px, py, pz) = (dims.x + 2, dims.y + 2, dims.z + 2);
        let len = px * py * pz;
        let at = |x: usize, y: usize, z: usize| (x + 1) + px * ((y + 1) + py * (z + 1));
        let mut offsets = [0isize; K];
        for (k, o) in offsets.iter_mut().enumerate() {
            let (dx, dy, dz) = kernel_offset(k);
            *o = dx + dy * px as isize + dz * (px * py) as isize;
        }
        let mut interior = vec![false; len];
        for z in 0..dims.z {
            for y in 0..dims.y {
                let row = at(0, y, z);
                interior[row..row + dims.x].fill(true);
            }
        }
        let (start, end) = if dims.is_empty() {
            (0, 0)
        } else {
            (at(0, 0, 0), at(dims.x - 1, dims.y - 1, dims.z - 1) + 1)
        };
        Self {
            dims,
            len,
            start,
            end,
            offsets,
            interior,
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let end = self.end;
        (self.start..end).step_by(BLOCK).map(move |s| (s, (s + BLOCK).min(end)))
    }

    #[inline]
    fn shifted(&self, k: usize, s: usize) -> usize {
        (s as isize + self.offsets[k]) as usize
    }

    fn pad<T: Scalar>(&self, src: &[T], channels: usize) -> Vec<T> {
        let v = self.dims.len();
        let mut out = vec![T::zero(); channels * self.len];
        for c in 0..channels {
            let (from, to) = (&src[c * v..(c + 1) * v], &mut out[c * self.len..(c + 1) * self.len]);
            for (row, chunk) in from.chunks_exact(self.dims.x.max(1)).enumerate() {
                let (y, z) = (row % self.dims.y, row / self.dims.y);
                let at = 1 + (self.dims.x + 2) * ((y + 1) + (self.dims.y + 2) * (z + 1));
                to[at..at + chunk.len()].copy_from_slice(chunk);
            }
        }
        out
    }

    fn unpad<T: Scalar>(&self, src: &[T], channels: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(channels * self.dims.len());
        for c in 0..channels {
            let from = &src[c * self.len..(c + 1) * self.len];
            for z in 0..self.dims.z {
                for y in 0..self.dims.y {
                    let at = 1 + (self.dims.x + 2) * ((y + 1) + (self.dims.y + 2) * (z + 1));
                    out.extend_from_slice(&from[at..at + self.dims.x]);
                }
            }
        }
        out
    }
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn has_avx2() -> bool {
    std::arch::is_x86_feature_detected!("avx2")
}

// The AVX2 entry points compile the same portable bodies with wider vectors.
// No fused multiply-add is introduced, so results match the portable path
// bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn dot_avx2<T: Scalar>(a: &[T], b: &[T]) -> T {
    dot_portable(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn axpy_avx2<T: Scalar>(dst: &mut [T], w: T, src: &[T]) {
    axpy_portable(dst, w, src)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime.
        return unsafe { dot_avx2(a, b) };
    }
    dot_portable(a, b)
}

#[inline]
fn axpy<T: Scalar>(dst: &mut [T], w: T, src: &[T]) {
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2, checked at runtime.
        return unsafe { axpy_avx2(dst, w, src) };
    }
    axpy_portable(dst, w, src)
}

/// Dot product with lane-split accumulators so the compiler can vectorise it.
#[inline(always)]
fn dot_portable<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

#[inline(always)]
fn axpy_portable<T: Scalar>(dst: &mut [T], w: T, src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + w * s;
    }
}

/// One same-padded 3×3×3 convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][27]`, kernel index `kx + 3 ky + 9 kz`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3d<T> {
    /// Fan-in scaled uniform initialisation, `U(-b, b)` with `b = sqrt(6 / fan_in)`
    /// for weights and `b = 1 / sqrt(fan_in)` for biases.
    pub fn init(in_channels: usize, out_channels: usize, rng: &mut impl Rng) -> Self {
        let fan_in = (in_channels * K) as f64;
        let wb = (6.0 / fan_in).sqrt();
        let bb = 1.0 / fan_in.sqrt();
        let weight = (0..out_channels * in_channels * K)
            .map(|_| T::from_f64(rng.random_range(-wb..wb)))
            .collect();
        let bias = (0..out_channels)
            .map(|_| T::from_f64(rng.random_range(-bb..bb)))
            .collect();
        Self {
            in_channels,
            out_channels,
            weight,
            bias,
        }
    }

    /// Convolution of a channel-major volume.
    pub fn forward(&self, input: &[T], dims: Dims) -> Vec<T> {
        let g = Padded::new(dims);
        g.unpad(
            &self.forward_padded(&g.pad(input, self.in_channels), &g),
            self.out_channels,
        )
    }

    /// Returns the gradient with respect to `input` (when `need_input_grad`)
    /// and accumulates parameter gradients into `grad`.
    pub fn backward(
        &self,
        input: &[T],
        grad_out: &[T],
        dims: Dims,
        grad: &mut Conv3d<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let g = Padded::new(dims);
        let gi = self.backward_padded(
            &g.pad(input, self.in_channels),
            &g.pad(grad_out, self.out_channels),
            &g,
            grad,
            need_input_grad,
        );
        gi.map(|gi| g.unpad(&gi, self.in_channels))
    }

    /// Padding positions of the result are zero.
    fn forward_padded(&self, input: &[T], g: &Padded) -> Vec<T> {
        let n = g.len;
        let mut out = vec![T::zero(); self.out_channels * n];
        for (s, e) in g.blocks() {
            for o in 0..self.out_channels {
                let dst = &mut out[o * n + s..o * n + e];
                for i in 0..self.in_channels {
                    let src = &input[i * n..(i + 1) * n];
                    let w = &self.weight[(o * self.in_channels + i) * K..][..K];
                    for (k, &wk) in w.iter().enumerate() {
                        let from = g.shifted(k, s);
                        axpy(dst, wk, &src[from..from + (e - s)]);
                    }
                }
            }
        }
        for o in 0..self.out_channels {
            let b = self.bias[o];
            let dst = &mut out[o * n..(o + 1) * n];
            for (d, &inside) in dst[g.start..g.end].iter_mut().zip(&g.interior[g.start..g.end]) {
                *d = if inside { *d + b } else { T::zero() };
            }
        }
        out
    }

    /// `grad_out` must be zero on padding. The returned input gradient is
    /// only meaningful on interior positions.
    fn backward_padded(
        &self,
        input: &[T],
        grad_out: &[T],
        g: &Padded,
        grad: &mut Conv3d<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let n = g.len;
        let mut grad_in = need_input_grad.then(|| vec![T::zero(); self.in_channels * n]);
        for o in 0..self.out_channels {
            let go = &grad_out[o * n..(o + 1) * n];
            grad.bias[o] = grad.bias[o] + go.iter().fold(T::zero(), |acc, &v| acc + v);
        }
        for (s, e) in g.blocks() {
            for o in 0..self.out_channels {
                let go = &grad_out[o * n + s..o * n + e];
                for i in 0..self.in_channels {
                    let src = &input[i * n..(i + 1) * n];
                    let base = (o * self.in_channels + i) * K;
                    for k in 0..K {
                        let from = g.shifted(k, s);
                        grad.weight[base + k] = grad.weight[base + k] + dot(go, &src[from..from + (e - s)]);
                    }
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                for i in 0..self.in_channels {
                    let dst = &mut gi[i * n..(i + 1) * n];
                    for o in 0..self.out_channels {
                        let go = &grad_out[o * n + s..o * n + e];
                        let w = &self.weight[(o * self.in_channels + i) * K..][..K];
                        for (k, &wk) in w.iter().enumerate() {
                            let to = g.shifted(k, s);
                            axpy(&mut dst[to..to + (e - s)], wk, go);
                        }
                    }
                }
            }
        }
        grad_in
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }
}

/// Stand-in segmentation backbone; output has one channel per tree node.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyNet<T> {
    pub layers: Vec<Conv3d<T>>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardPass<T> {
    /// Padded input of each layer (post-ReLU for all but the first).
    inputs: Vec<Vec<T>>,
    pub output: Vec<T>,
    grid: Padded,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn dims(&self) -> Dims {
        self.grid.dims
    }
}

impl<T: Scalar> TinyNet<T> {
    /// Default plan `1 → 32 → 16 → out_channels`.
    pub fn new(out_channels: usize, seed: u64) -> Self {
        Self::with_plan(&[1, 32, 16, out_channels], seed)
    }

    /// Channel plan `[in, hidden…, out]`.
    pub fn with_plan(plan: &[usize], seed: u64) -> Self {
        assert!(plan.len() >= 2, "plan needs input and output channels");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = plan.windows(2).map(|w| Conv3d::init(w[0], w[1], &mut rng)).collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Conv3d<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Format("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_channels != pair[1].in_channels {
                return Err(Error::Format("layer channel counts do not chain".into()));
            }
        }
        for l in &layers {
            if l.weight.len() != l.in_channels * l.out_channels * K || l.bias.len() != l.out_channels {
                return Err(Error::Format("layer tensor sizes are inconsistent".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().expect("non-empty").out_channels
    }

    pub fn plan(&self) -> Vec<usize> {
        std::iter::once(self.in_channels())
            .chain(self.layers.iter().map(|l| l.out_channels))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[T], dims: Dims) -> ForwardPass<T> {
        let grid = Padded::new(dims);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let center = T::from_f64(INPUT_CENTER);
        let centered: Vec<T> = input.iter().map(|&v| v - center).collect();
        let mut x = grid.pad(&centered, self.in_channels());
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward_padded(&x, &grid);
            if li != last {
                for v in &mut y {
                    *v = v.max(T::zero());
                }
            }
            inputs.push(x);
            x = y;
        }
        ForwardPass {
            inputs,
            output: grid.unpad(&x, self.out_channels()),
            grid,
        }
    }

    /// Parameter gradients given the gradient of the loss w.r.t. the output.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_output: &[T]) -> TinyNet<T> {
        let grid = &pass.grid;
        let mut grads = self.zeros_like();
        let mut g = grid.pad(grad_output, self.out_channels());
        for li in (0..self.layers.len()).rev() {
            let input = &pass.inputs[li];
            let gi = self.layers[li].backward_padded(input, &g, grid, &mut grads.layers[li], li > 0);
            if let Some(mut gi) = gi {
                // ReLU: the input of layer li is relu(pre), so pass only where
                // it is positive. Padding is zero, which also clears it here.
                for (d, &a) in gi.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
                g = gi;
            }
        }
        grads
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Conv3d::zeros_like).collect(),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((
                format!("conv{}.weight", i + 1),
                vec![l.out_channels, l.in_channels, 3, 3, 3],
                l.weight.as_slice(),
            ));
            out.push((format!("conv{}.bias", i + 1), vec![l.out_channels], l.bias.as_slice()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v * factor;
            }
        }
    }

    pub fn add_assign(&mut self, other: &TinyNet<T>) {
        for (l, r) in self.layers.iter_mut().zip(&other.layers) {
            for (a, &b) in l.weight.iter_mut().zip(&r.weight) {
                *a = *a + b;
            }
            for (a, &b) in l.bias.iter_mut().zip(&r.bias) {
                *a = *a + b;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> TinyNet<U> {
        TinyNet {
            layers: self
                .layers
                .iter()
                .map(|l| Conv3d {
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    weight: l.weight.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
