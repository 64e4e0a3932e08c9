//! Layers with explicit forward caches and backward passes.
//!
//! Parameters of a whole model live in one flat buffer; each layer only
//! remembers the ranges it owns. Backward passes accumulate into a gradient
//! buffer laid out identically, which keeps the optimizer, checkpointing and
//! parameter counting trivial.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::tensor::{col2im, im2col, Act, ConvGeometry};
use crate::Scalar;

/// A named slice of the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// `U(-b, b)`.
    Uniform(f64),
    /// `N(0, 1)`.
    StandardNormal,
    Constant(f64),
}

/// Allocates and initializes parameters while a model is being assembled.
pub struct ParamBuilder<'r, T, R: ?Sized> {
    values: Vec<T>,
    entries: Vec<ParamEntry>,
    prefix: String,
    rng: &'r mut R,
}

impl<'r, T: Scalar, R: Rng + ?Sized> ParamBuilder<'r, T, R> {
    pub fn new(rng: &'r mut R) -> Self {
        Self { values: Vec::new(), entries: Vec::new(), prefix: String::new(), rng }
    }

    pub fn scope(&mut self, prefix: &str) {
        self.prefix = String::from(prefix);
    }

    pub fn alloc(&mut self, name: &str, len: usize, init: Init) -> Range<usize> {
        let start = self.values.len();
        match init {
            Init::Uniform(b) => {
                let dist = Uniform::new_inclusive(-b, b).expect("finite uniform bound");
                for _ in 0..len {
                    let v = dist.sample(self.rng);
                    self.values.push(T::from_f64_lossy(v));
                }
            }
            Init::StandardNormal => {
                for _ in 0..len {
                    let v: f64 = StandardNormal.sample(self.rng);
                    self.values.push(T::from_f64_lossy(v));
                }
            }
            Init::Constant(c) => self.values.extend(core::iter::repeat_n(T::from_f64_lossy(c), len)),
        }
        let range = start..self.values.len();
        let mut full = self.prefix.clone();
        if !full.is_empty() {
            full.push('.');
        }
        full.push_str(name);
        self.entries.push(ParamEntry { name: full, range: range.clone() });
        range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn finish(self) -> (Vec<T>, Vec<ParamEntry>) {
        (self.values, self.entries)
    }
}

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / libm::sqrt(fan_in as f64)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn add_bias<T: Scalar>(y: &mut Act<T>, bias: &[T]) {
    let per_channel = y.cols();
    for (c, chunk) in y.data.chunks_exact_mut(per_channel).enumerate() {
        let b = bias[c];
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn accumulate_bias_grad<T: Scalar>(dy: &Act<T>, grad: &mut [T]) {
    let per_channel = dy.cols();
    for (c, chunk) in dy.data.chunks_exact(per_channel).enumerate() {
        grad[c] = grad[c] + chunk.iter().copied().sum::<T>();
    }
}

/// 2-D convolution with square kernels, zero padding and bias.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

pub enum ConvCache<T> {
    /// Column buffer of the input.
    Cols { cols: Vec<T>, geometry: ConvGeometry },
    /// A pointwise convolution's input is its own column buffer.
    Pointwise(Act<T>),
}

impl Conv2d {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut ParamBuilder<'_, T, R>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let bound = fan_in_bound(fan_in);
        let weight = b.alloc(&alloc::format!("{name}.weight"), out_channels * fan_in, Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), out_channels, Init::Uniform(bound));
        Self { in_channels, out_channels, kernel, stride, pad, weight, bias }
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    fn geometry(&self, h: usize, w: usize) -> ConvGeometry {
        ConvGeometry {
            channels: self.in_channels,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            in_h: h,
            in_w: w,
            out_h: ConvGeometry::conv_out(h, self.kernel, self.stride, self.pad),
            out_w: ConvGeometry::conv_out(w, self.kernel, self.stride, self.pad),
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let g = self.geometry(h, w);
        (g.out_h, g.out_w)
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>) -> (Act<T>, ConvCache<T>) {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let w = &p[self.weight.clone()];
        let rows = self.in_channels * self.kernel * self.kernel;
        if self.is_pointwise() {
            let cols = x.cols();
            let mut y = Act::zeros(self.out_channels, x.n, x.h, x.w);
            T::gemm(self.out_channels, rows, cols, T::one(), w, (rows as isize, 1), &x.data, (cols as isize, 1), T::zero(), &mut y.data, cols as isize);
            add_bias(&mut y, &p[self.bias.clone()]);
            return (y, ConvCache::Pointwise(x.clone()));
        }
        let g = self.geometry(x.h, x.w);
        let colbuf = im2col(x, &g);
        let cols = x.n * g.out_h * g.out_w;
        let mut y = Act::zeros(self.out_channels, x.n, g.out_h, g.out_w);
        T::gemm(self.out_channels, rows, cols, T::one(), w, (rows as isize, 1), &colbuf, (cols as isize, 1), T::zero(), &mut y.data, cols as isize);
        add_bias(&mut y, &p[self.bias.clone()]);
        (y, ConvCache::Cols { cols: colbuf, geometry: g })
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward<T: Scalar>(&self, p: &[T], cache: &ConvCache<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let rows = self.in_channels * self.kernel * self.kernel;
        let cols = dy.cols();
        let (colbuf, geometry) = match cache {
            ConvCache::Cols { cols, geometry } => (&cols[..], Some(geometry)),
            ConvCache::Pointwise(x) => (&x.data[..], None),
        };
        // dW += dY · colsᵀ
        T::gemm(self.out_channels, cols, rows, T::one(), &dy.data, (cols as isize, 1), colbuf, (1, cols as isize), T::one(), &mut grad[self.weight.clone()], rows as isize);
        accumulate_bias_grad(dy, &mut grad[self.bias.clone()]);
        // dCols = Wᵀ · dY
        let w = &p[self.weight.clone()];
        let mut dcols = vec![T::zero(); rows * cols];
        T::gemm(rows, self.out_channels, cols, T::one(), w, (1, rows as isize), &dy.data, (cols as isize, 1), T::zero(), &mut dcols, cols as isize);
        match geometry {
            Some(g) => col2im(&dcols, dy.n, g),
            None => Act::from_data(self.in_channels, dy.n, dy.h, dy.w, dcols),
        }
    }
}

/// Transposed convolution (fractionally strided), used for upsampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
    /// Layout `[in_channels][out_channels·k·k]`.
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        b: &mut ParamBuilder<'_, T, R>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Self {
        let bound = fan_in_bound(out_channels * kernel * kernel);
        let weight = b.alloc(&alloc::format!("{name}.weight"), in_channels * out_channels * kernel * kernel, Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), out_channels, Init::Uniform(bound));
        Self { in_channels, out_channels, kernel, stride, pad, output_pad, weight, bias }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let f = |s: usize| (s - 1) * self.stride + self.kernel + self.output_pad - 2 * self.pad;
        (f(h), f(w))
    }

    fn geometry(&self, h: usize, w: usize) -> ConvGeometry {
        let (oh, ow) = self.out_size(h, w);
        ConvGeometry {
            channels: self.out_channels,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
            in_h: oh,
            in_w: ow,
            out_h: h,
            out_w: w,
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>) -> Act<T> {
        assert_eq!(x.c, self.in_channels, "transposed conv input channels");
        let g = self.geometry(x.h, x.w);
        let rows = g.rows();
        let cols = x.cols();
        let w = &p[self.weight.clone()];
        let mut colbuf = vec![T::zero(); rows * cols];
        // cols = Wᵀ · x
        T::gemm(rows, self.in_channels, cols, T::one(), w, (1, rows as isize), &x.data, (cols as isize, 1), T::zero(), &mut colbuf, cols as isize);
        let mut y = col2im(&colbuf, x.n, &g);
        add_bias(&mut y, &p[self.bias.clone()]);
        y
    }

    /// `x` is the forward input.
    pub fn backward<T: Scalar>(&self, p: &[T], x: &Act<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let g = self.geometry(x.h, x.w);
        let rows = g.rows();
        let cols = x.cols();
        let dcols = im2col(dy, &g);
        accumulate_bias_grad(dy, &mut grad[self.bias.clone()]);
        // dW += x · dColsᵀ
        T::gemm(self.in_channels, cols, rows, T::one(), &x.data, (cols as isize, 1), &dcols, (1, cols as isize), T::one(), &mut grad[self.weight.clone()], rows as isize);
        let w = &p[self.weight.clone()];
        let mut dx = Act::zeros(self.in_channels, x.n, x.h, x.w);
        T::gemm(self.in_channels, rows, cols, T::one(), w, (rows as isize, 1), &dcols, (cols as isize, 1), T::zero(), &mut dx.data, cols as isize);
        dx
    }
}

/// Parametric ReLU with one slope per channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PRelu {
    pub channels: usize,
    pub slope: Range<usize>,
}

impl PRelu {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, channels: usize) -> Self {
        Self { channels, slope: b.alloc(&alloc::format!("{name}.slope"), channels, Init::Constant(0.25)) }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>) -> Act<T> {
        let a = &p[self.slope.clone()];
        let per = x.cols();
        let mut y = x.clone();
        for (c, chunk) in y.data.chunks_exact_mut(per).enumerate() {
            let s = a[c];
            chunk.iter_mut().for_each(|v| {
                if *v < T::zero() {
                    *v = *v * s
                }
            });
        }
        y
    }

    pub fn backward<T: Scalar>(&self, p: &[T], x: &Act<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let a = &p[self.slope.clone()];
        let per = x.cols();
        let mut dx = dy.clone();
        let g = &mut grad[self.slope.clone()];
        for (c, (dchunk, xchunk)) in dx.data.chunks_exact_mut(per).zip(x.data.chunks_exact(per)).enumerate() {
            let s = a[c];
            let mut ds = T::zero();
            for (d, xv) in dchunk.iter_mut().zip(xchunk) {
                if *xv < T::zero() {
                    ds = ds + *d * *xv;
                    *d = *d * s;
                }
            }
            g[c] = g[c] + ds;
        }
        dx
    }
}

/// Fully connected layer on row-major `[batch][features]` inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, inputs: usize, outputs: usize) -> Self {
        let bound = fan_in_bound(inputs);
        let weight = b.alloc(&alloc::format!("{name}.weight"), inputs * outputs, Init::Uniform(bound));
        let bias = b.alloc(&alloc::format!("{name}.bias"), outputs, Init::Uniform(bound));
        Self { inputs, outputs, weight, bias }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], batch: usize) -> Vec<T> {
        let (i, o) = (self.inputs, self.outputs);
        let mut y = vec![T::zero(); batch * o];
        let b = &p[self.bias.clone()];
        for row in y.chunks_exact_mut(o) {
            row.copy_from_slice(b);
        }
        // Y = X · Wᵀ
        T::gemm(batch, i, o, T::one(), x, (i as isize, 1), &p[self.weight.clone()], (1, i as isize), T::one(), &mut y, o as isize);
        y
    }

    pub fn backward<T: Scalar>(&self, p: &[T], x: &[T], dy: &[T], batch: usize, grad: &mut [T]) -> Vec<T> {
        let (i, o) = (self.inputs, self.outputs);
        // dW += dYᵀ · X
        T::gemm(o, batch, i, T::one(), dy, (1, o as isize), x, (i as isize, 1), T::one(), &mut grad[self.weight.clone()], i as isize);
        let gb = &mut grad[self.bias.clone()];
        for row in dy.chunks_exact(o) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g = *g + *d);
        }
        let mut dx = vec![T::zero(); batch * i];
        T::gemm(batch, o, i, T::one(), dy, (o as isize, 1), &p[self.weight.clone()], (i as isize, 1), T::zero(), &mut dx, i as isize);
        dx
    }
}

/// `x + conv_b(prelu(conv_a(x)))` with 3×3 same-size convolutions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualBlock {
    pub conv_a: Conv2d,
    pub act: PRelu,
    pub conv_b: Conv2d,
}

pub struct ResidualCache<T> {
    a: ConvCache<T>,
    pre_act: Act<T>,
    b: ConvCache<T>,
}

impl ResidualBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, channels: usize) -> Self {
        Self {
            conv_a: Conv2d::new(b, &alloc::format!("{name}.conv_a"), channels, channels, 3, 1, 1),
            act: PRelu::new(b, &alloc::format!("{name}.act"), channels),
            conv_b: Conv2d::new(b, &alloc::format!("{name}.conv_b"), channels, channels, 3, 1, 1),
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>) -> (Act<T>, ResidualCache<T>) {
        let (h, a) = self.conv_a.forward(p, x);
        let act = self.act.forward(p, &h);
        let (mut y, b) = self.conv_b.forward(p, &act);
        y.add_assign(x);
        (y, ResidualCache { a, pre_act: h, b })
    }

    pub fn backward<T: Scalar>(&self, p: &[T], cache: &ResidualCache<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let d_act = self.conv_b.backward(p, &cache.b, dy, grad);
        let d_h = self.act.backward(p, &cache.pre_act, &d_act, grad);
        let mut dx = self.conv_a.backward(p, &cache.a, &d_h, grad);
        dx.add_assign(dy);
        dx
    }
}

/// Simplified spatial attention: `x + x ⊙ σ(conv1x1(x))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionBlock {
    pub mask: Conv2d,
}

pub struct AttentionCache<T> {
    input: Act<T>,
    mask_cache: ConvCache<T>,
    gate: Act<T>,
}

impl AttentionBlock {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, channels: usize) -> Self {
        Self { mask: Conv2d::new(b, &alloc::format!("{name}.mask"), channels, channels, 1, 1, 0) }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>) -> (Act<T>, AttentionCache<T>) {
        let (mut gate, mask_cache) = self.mask.forward(p, x);
        gate.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        let mut y = x.clone();
        y.data.iter_mut().zip(&gate.data).for_each(|(v, g)| *v = *v + *v * *g);
        (y, AttentionCache { input: x.clone(), mask_cache, gate })
    }

    pub fn backward<T: Scalar>(&self, p: &[T], cache: &AttentionCache<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let mut d_logit = dy.clone();
        d_logit
            .data
            .iter_mut()
            .zip(cache.input.data.iter().zip(&cache.gate.data))
            .for_each(|(d, (x, g))| *d = *d * *x * *g * (T::one() - *g));
        let mut dx = self.mask.backward(p, &cache.mask_cache, &d_logit, grad);
        dx.data
            .iter_mut()
            .zip(dy.data.iter().zip(&cache.gate.data))
            .for_each(|(acc, (d, g))| *acc = *acc + *d * (T::one() + *g));
        dx
    }
}

/// SNR-adaptive attention-feature gate.
///
/// Context = per-channel spatial mean of the features concatenated with the
/// (normalized) SNR; two dense layers map it to a sigmoid gate per channel
/// that rescales the feature map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AfModule {
    pub channels: usize,
    pub fc1: Dense,
    pub fc2: Dense,
}

pub struct AfCache<T> {
    input: Act<T>,
    context: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
    gate: Vec<T>,
}

impl AfModule {
    pub fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, channels: usize) -> Self {
        Self {
            channels,
            fc1: Dense::new(b, &alloc::format!("{name}.fc1"), channels + 1, channels),
            fc2: Dense::new(b, &alloc::format!("{name}.fc2"), channels, channels),
        }
    }

    /// Gates in `(0, 1)`, layout `[sample][channel]`.
    pub fn gates<T: Scalar>(&self, p: &[T], x: &Act<T>, snr: &[T]) -> Vec<T> {
        self.compute(p, x, snr).gate
    }

    fn compute<T: Scalar>(&self, p: &[T], x: &Act<T>, snr: &[T]) -> AfCache<T> {
        assert_eq!(x.c, self.channels, "AF channels");
        assert_eq!(snr.len(), x.n, "one SNR per sample");
        let n = x.n;
        let ctx_dim = self.channels + 1;
        let inv_area = T::one() / T::from_usize(x.plane()).unwrap();
        let mut context = vec![T::zero(); n * ctx_dim];
        for s in 0..n {
            for c in 0..self.channels {
                context[s * ctx_dim + c] = x.map(c, s).iter().copied().sum::<T>() * inv_area;
            }
            context[s * ctx_dim + self.channels] = snr[s];
        }
        let hidden_pre = self.fc1.forward(p, &context, n);
        let hidden: Vec<T> = hidden_pre.iter().map(|v| v.max(T::zero())).collect();
        let mut gate = self.fc2.forward(p, &hidden, n);
        gate.iter_mut().for_each(|v| *v = sigmoid(*v));
        AfCache { input: x.clone(), context, hidden_pre, hidden, gate }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>, snr: &[T]) -> (Act<T>, AfCache<T>) {
        let cache = self.compute(p, x, snr);
        let mut y = x.clone();
        for c in 0..self.channels {
            for s in 0..x.n {
                let g = cache.gate[s * self.channels + c];
                y.map_mut(c, s).iter_mut().for_each(|v| *v = *v * g);
            }
        }
        (y, cache)
    }

    pub fn backward<T: Scalar>(&self, p: &[T], cache: &AfCache<T>, dy: &Act<T>, grad: &mut [T]) -> Act<T> {
        let x = &cache.input;
        let n = x.n;
        let ch = self.channels;
        let mut dx = dy.clone();
        let mut d_gate = vec![T::zero(); n * ch];
        for c in 0..ch {
            for s in 0..n {
                let g = cache.gate[s * ch + c];
                d_gate[s * ch + c] = dy.map(c, s).iter().zip(x.map(c, s)).map(|(d, v)| *d * *v).sum();
                dx.map_mut(c, s).iter_mut().for_each(|d| *d = *d * g);
            }
        }
        let d_logit: Vec<T> = d_gate.iter().zip(&cache.gate).map(|(d, g)| *d * *g * (T::one() - *g)).collect();
        let mut d_hidden = self.fc2.backward(p, &cache.hidden, &d_logit, n, grad);
        d_hidden
            .iter_mut()
            .zip(&cache.hidden_pre)
            .for_each(|(d, h)| if *h <= T::zero() { *d = T::zero() });
        let d_context = self.fc1.backward(p, &cache.context, &d_hidden, n, grad);
        let inv_area = T::one() / T::from_usize(x.plane()).unwrap();
        for c in 0..ch {
            for s in 0..n {
                let d = d_context[s * (ch + 1) + c] * inv_area;
                dx.map_mut(c, s).iter_mut().for_each(|v| *v = *v + d);
            }
        }
        dx
    }
}
