//! Siamese DeepJSCC encoder, device embeddings and the shared two-slot
//! decoder.
//!
//! Encoder: `conv3x3/2 → PReLU → [residual, attention, AF] → conv3x3/2 →
//! PReLU → [residual, attention, AF] → conv1x1 → latent`.
//! Decoder mirrors it with transposed convolutions and ends in a sigmoid so
//! every reconstructed pixel lies in `[0, 1]`.
//!
//! The NOMA variant feeds `C_in + 1` input planes (image plus device
//! embedding), spends all `k` channel uses and emits `2·C_in` output planes,
//! slot `i` belonging to device `i`. The point-to-point variant (the TDMA
//! baseline) has no embedding, `k/2` channel uses and `C_in` outputs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use num_complex::Complex;
use rand::Rng;

use crate::channel::complex_to_reals;
use crate::nn::{
    AfCache, AfModule, AttentionBlock, AttentionCache, Conv2d, ConvCache, ConvTranspose2d, Init, PRelu, ParamBuilder,
    ParamEntry, ResidualBlock, ResidualCache,
};
use crate::tensor::{Act, ImageTensor};
use crate::{Error, Result, Scalar};

/// SNR (dB) fed to the AF gates is divided by this, mapping the training
/// range `[0, 20]` onto `[0, 1]`.
pub const SNR_CONDITIONING_SCALE: f64 = 20.0;

/// Bandwidth ratio `ρ = k / (C_in·W·H)` as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rho {
    pub num: u64,
    pub den: u64,
}

impl Rho {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidModel(format!("bandwidth ratio {num}/{den} must be positive")));
        }
        Ok(Self { num, den })
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Channel uses for `pixels` source values, if integral.
    pub fn channel_uses(&self, pixels: usize) -> Result<usize> {
        let scaled = pixels as u64 * self.num;
        if !scaled.is_multiple_of(self.den) {
            return Err(Error::InvalidModel(format!(
                "bandwidth ratio {}/{} gives non-integer k for {pixels} pixels",
                self.num, self.den
            )));
        }
        Ok((scaled / self.den) as usize)
    }
}

impl core::fmt::Display for Rho {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl core::str::FromStr for Rho {
    type Err = Error;

    /// Parses `"n/d"` or a bare integer `"n"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidModel(format!("bandwidth ratio {s:?} is not of the form n/d"));
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => (s.trim().parse().map_err(|_| bad())?, 1),
        };
        Self::new(num, den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Superposition model: device embeddings, full bandwidth, two output slots.
    Noma,
    /// Classical single-user DeepJSCC on half the bandwidth.
    PointToPoint,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Noma => "noma",
            Variant::PointToPoint => "p2p",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Device {
    One,
    Two,
}

impl Device {
    pub const BOTH: [Device; 2] = [Device::One, Device::Two];

    pub fn index(self) -> usize {
        match self {
            Device::One => 0,
            Device::Two => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub shape: ImageShape,
    pub rho: Rho,
    pub filters: usize,
    pub variant: Variant,
    /// Channel uses of this model (`k` for NOMA, `k/2` for TDMA).
    pub channel_uses: usize,
    pub snr_conditioning: bool,
}

impl ModelConfig {
    pub fn noma(shape: ImageShape, rho: Rho, filters: usize) -> Result<Self> {
        Self::build(shape, rho, filters, Variant::Noma)
    }

    pub fn tdma(shape: ImageShape, rho: Rho, filters: usize) -> Result<Self> {
        Self::build(shape, rho, filters, Variant::PointToPoint)
    }

    pub fn build(shape: ImageShape, rho: Rho, filters: usize, variant: Variant) -> Result<Self> {
        if !matches!(shape.channels, 1 | 3) {
            return Err(Error::InvalidModel(format!("C_in must be 1 or 3, got {}", shape.channels)));
        }
        if !shape.height.is_multiple_of(4) || !shape.width.is_multiple_of(4) || shape.height == 0 || shape.width == 0 {
            return Err(Error::InvalidModel(format!(
                "image {}x{} must be a positive multiple of 4 on both axes",
                shape.height, shape.width
            )));
        }
        if filters == 0 {
            return Err(Error::InvalidModel("filter width must be positive".into()));
        }
        let k = rho.channel_uses(shape.pixels())?;
        let channel_uses = match variant {
            Variant::Noma => k,
            Variant::PointToPoint => {
                if k % 2 != 0 {
                    return Err(Error::InvalidModel(format!("k = {k} cannot be split into two TDMA slots")));
                }
                k / 2
            }
        };
        let cfg = Self { shape, rho, filters, variant, channel_uses, snr_conditioning: true };
        cfg.latent_channels()?;
        Ok(cfg)
    }

    pub fn without_snr_conditioning(mut self) -> Self {
        self.snr_conditioning = false;
        self
    }

    pub fn latent_hw(&self) -> (usize, usize) {
        (self.shape.height / 4, self.shape.width / 4)
    }

    /// Channels of the latent feature map: `2k / ((H/4)(W/4))`.
    pub fn latent_channels(&self) -> Result<usize> {
        let (h, w) = self.latent_hw();
        let reals = 2 * self.channel_uses;
        if !reals.is_multiple_of(h * w) || reals == 0 {
            return Err(Error::InvalidModel(format!(
                "2k = {reals} real latent values do not tile a {h}x{w} feature map"
            )));
        }
        Ok(reals / (h * w))
    }

    pub fn input_channels(&self) -> usize {
        match self.variant {
            Variant::Noma => self.shape.channels + 1,
            Variant::PointToPoint => self.shape.channels,
        }
    }

    pub fn output_slots(&self) -> usize {
        match self.variant {
            Variant::Noma => 2,
            Variant::PointToPoint => 1,
        }
    }

    /// Length of the real-packed latent, `2k`.
    pub fn latent_len(&self) -> usize {
        2 * self.channel_uses
    }
}

/// Residual block, attention block and (optionally) an AF gate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub residual: ResidualBlock,
    pub attention: AttentionBlock,
    pub af: Option<AfModule>,
}

struct StageCache<T> {
    residual: ResidualCache<T>,
    attention: AttentionCache<T>,
    af: Option<AfCache<T>>,
}

impl Stage {
    fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, name: &str, f: usize, af: bool) -> Self {
        Self {
            residual: ResidualBlock::new(b, &format!("{name}.residual"), f),
            attention: AttentionBlock::new(b, &format!("{name}.attention"), f),
            af: af.then(|| AfModule::new(b, &format!("{name}.af"), f)),
        }
    }

    fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>, snr: &[T]) -> (Act<T>, StageCache<T>) {
        let (h, residual) = self.residual.forward(p, x);
        let (h, attention) = self.attention.forward(p, &h);
        match &self.af {
            Some(af) => {
                let (y, c) = af.forward(p, &h, snr);
                (y, StageCache { residual, attention, af: Some(c) })
            }
            None => (h, StageCache { residual, attention, af: None }),
        }
    }

    fn backward<T: Scalar>(&self, p: &[T], c: &StageCache<T>, dy: &Act<T>, g: &mut [T]) -> Act<T> {
        let d = match (&self.af, &c.af) {
            (Some(af), Some(cache)) => af.backward(p, cache, dy, g),
            _ => dy.clone(),
        };
        let d = self.attention.backward(p, &c.attention, &d, g);
        self.residual.backward(p, &c.residual, &d, g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoder {
    pub conv_in: Conv2d,
    pub act_in: PRelu,
    pub stage1: Stage,
    pub down: Conv2d,
    pub act_down: PRelu,
    pub stage2: Stage,
    pub project: Conv2d,
    /// Parameter range covering the whole encoder (`Θ`).
    pub params: Range<usize>,
}

pub struct EncoderCache<T> {
    conv_in: ConvCache<T>,
    pre_in: Act<T>,
    stage1: StageCache<T>,
    down: ConvCache<T>,
    pre_down: Act<T>,
    stage2: StageCache<T>,
    project: ConvCache<T>,
    out_shape: (usize, usize, usize),
}

impl Encoder {
    fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, cfg: &ModelConfig, latent_c: usize) -> Self {
        let f = cfg.filters;
        let af = cfg.snr_conditioning;
        let start = b.len();
        b.scope("encoder");
        let conv_in = Conv2d::new(b, "conv_in", cfg.input_channels(), f, 3, 2, 1);
        let act_in = PRelu::new(b, "act_in", f);
        let stage1 = Stage::new(b, "stage1", f, af);
        let down = Conv2d::new(b, "down", f, f, 3, 2, 1);
        let act_down = PRelu::new(b, "act_down", f);
        let stage2 = Stage::new(b, "stage2", f, af);
        let project = Conv2d::new(b, "project", f, latent_c, 1, 1, 0);
        Self { conv_in, act_in, stage1, down, act_down, stage2, project, params: start..b.len() }
    }

    fn forward<T: Scalar>(&self, p: &[T], x: &Act<T>, snr: &[T]) -> (Act<T>, EncoderCache<T>) {
        let (pre_in, conv_in) = self.conv_in.forward(p, x);
        let h = self.act_in.forward(p, &pre_in);
        let (h, stage1) = self.stage1.forward(p, &h, snr);
        let (pre_down, down) = self.down.forward(p, &h);
        let h = self.act_down.forward(p, &pre_down);
        let (h, stage2) = self.stage2.forward(p, &h, snr);
        let (z, project) = self.project.forward(p, &h);
        let out_shape = (z.c, z.h, z.w);
        (z, EncoderCache { conv_in, pre_in, stage1, down, pre_down, stage2, project, out_shape })
    }

    fn backward<T: Scalar>(&self, p: &[T], c: &EncoderCache<T>, dz: &Act<T>, g: &mut [T]) -> Act<T> {
        let d = self.project.backward(p, &c.project, dz, g);
        let d = self.stage2.backward(p, &c.stage2, &d, g);
        let d = self.act_down.backward(p, &c.pre_down, &d, g);
        let d = self.down.backward(p, &c.down, &d, g);
        let d = self.stage1.backward(p, &c.stage1, &d, g);
        let d = self.act_in.backward(p, &c.pre_in, &d, g);
        self.conv_in.backward(p, &c.conv_in, &d, g)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoder {
    pub project: Conv2d,
    pub act_in: PRelu,
    pub stage2: Stage,
    pub up: ConvTranspose2d,
    pub act_up: PRelu,
    pub stage1: Stage,
    pub out: ConvTranspose2d,
    /// Parameter range covering the whole decoder (`Φ`).
    pub params: Range<usize>,
}

pub struct DecoderCache<T> {
    input: Act<T>,
    project: ConvCache<T>,
    pre_in: Act<T>,
    stage2: StageCache<T>,
    up_input: Act<T>,
    pre_up: Act<T>,
    stage1: StageCache<T>,
    out_input: Act<T>,
    output: Act<T>,
}

impl Decoder {
    fn new<T: Scalar, R: Rng + ?Sized>(b: &mut ParamBuilder<'_, T, R>, cfg: &ModelConfig, latent_c: usize) -> Self {
        let f = cfg.filters;
        let af = cfg.snr_conditioning;
        let start = b.len();
        b.scope("decoder");
        let project = Conv2d::new(b, "project", latent_c, f, 1, 1, 0);
        let act_in = PRelu::new(b, "act_in", f);
        let stage2 = Stage::new(b, "stage2", f, af);
        let up = ConvTranspose2d::new(b, "up", f, f, 3, 2, 1, 1);
        let act_up = PRelu::new(b, "act_up", f);
        let stage1 = Stage::new(b, "stage1", f, af);
        let out = ConvTranspose2d::new(b, "out", f, cfg.output_slots() * cfg.shape.channels, 3, 2, 1, 1);
        Self { project, act_in, stage2, up, act_up, stage1, out, params: start..b.len() }
    }

    fn forward<T: Scalar>(&self, p: &[T], y: &Act<T>, snr: &[T]) -> (Act<T>, DecoderCache<T>) {
        let (pre_in, project) = self.project.forward(p, y);
        let h = self.act_in.forward(p, &pre_in);
        let (up_input, stage2) = self.stage2.forward(p, &h, snr);
        let pre_up = self.up.forward(p, &up_input);
        let h = self.act_up.forward(p, &pre_up);
        let (out_input, stage1) = self.stage1.forward(p, &h, snr);
        let mut output = self.out.forward(p, &out_input);
        output.data.iter_mut().for_each(|v| *v = crate::nn::sigmoid(*v));
        let cache = DecoderCache {
            input: y.clone(),
            project,
            pre_in,
            stage2,
            up_input,
            pre_up,
            stage1,
            out_input,
            output: output.clone(),
        };
        (output, cache)
    }

    /// `d_out` is the gradient w.r.t. the sigmoid outputs.
    fn backward<T: Scalar>(&self, p: &[T], c: &DecoderCache<T>, d_out: &Act<T>, g: &mut [T]) -> Act<T> {
        let mut d = d_out.clone();
        d.data.iter_mut().zip(&c.output.data).for_each(|(d, y)| *d = *d * *y * (T::one() - *y));
        let d = self.out.backward(p, &c.out_input, &d, g);
        let d = self.stage1.backward(p, &c.stage1, &d, g);
        let d = self.act_up.backward(p, &c.pre_up, &d, g);
        let d = self.up.backward(p, &c.up_input, &d, g);
        let d = self.stage2.backward(p, &c.stage2, &d, g);
        let d = self.act_in.backward(p, &c.pre_in, &d, g);
        let dy = self.project.backward(p, &c.project, &d, g);
        assert!(dy.same_shape(&c.input));
        dy
    }
}

/// Concatenates the device-embedding plane after the image channels.
pub fn augment_input<T: Scalar>(x: &ImageTensor<T>, embedding: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    if embedding.channels != 1 || embedding.height != x.height || embedding.width != x.width {
        return Err(Error::ShapeMismatch(format!(
            "embedding {}x{}x{} does not match image {}x{}",
            embedding.channels, embedding.height, embedding.width, x.height, x.width
        )));
    }
    let mut data = Vec::with_capacity(x.len() + embedding.len());
    data.extend_from_slice(&x.data);
    data.extend_from_slice(&embedding.data);
    Ok(ImageTensor::new(x.channels + 1, x.height, x.width, data))
}

/// A complete model: configuration, flat parameters and layer layout.
#[derive(Debug, Clone)]
pub struct JsccModel<T> {
    config: ModelConfig,
    params: Vec<T>,
    entries: Vec<ParamEntry>,
    encoder: Encoder,
    decoder: Decoder,
    embeddings: Option<[Range<usize>; 2]>,
}

/// Everything the backward pass needs from a batched encode.
pub struct EncodeCache<T> {
    inner: EncoderCache<T>,
    devices: Vec<Option<Device>>,
}

impl<T: Scalar> JsccModel<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let latent_c = config.latent_channels()?;
        let mut b = ParamBuilder::new(rng);
        let encoder = Encoder::new(&mut b, &config, latent_c);
        let decoder = Decoder::new(&mut b, &config, latent_c);
        let embeddings = match config.variant {
            Variant::Noma => {
                b.scope("embedding");
                let plane = config.shape.plane();
                Some([b.alloc("device1", plane, Init::StandardNormal), b.alloc("device2", plane, Init::StandardNormal)])
            }
            Variant::PointToPoint => None,
        };
        let (params, entries) = b.finish();
        Ok(Self { config, params, entries, encoder, decoder, embeddings })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Total trainable scalars, device embeddings included.
    pub fn count_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ParameterCount { expected: self.params.len(), actual: params.len() });
        }
        self.params = params;
        Ok(())
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Range of `Θ` used when encoding for `device`. Both devices get the
    /// same range: the encoders share storage.
    pub fn encoder_range(&self, _device: Device) -> Range<usize> {
        self.encoder.params.clone()
    }

    pub fn decoder_range(&self) -> Range<usize> {
        self.decoder.params.clone()
    }

    pub fn embedding_range(&self, device: Device) -> Option<Range<usize>> {
        self.embeddings.as_ref().map(|e| e[device.index()].clone())
    }

    pub fn embedding(&self, device: Device) -> Option<ImageTensor<T>> {
        let r = self.embedding_range(device)?;
        let s = self.config.shape;
        Some(ImageTensor::new(1, s.height, s.width, self.params[r].to_vec()))
    }

    fn conditioning(snr_db: &[f64]) -> Vec<T> {
        snr_db.iter().map(|s| T::from_f64_lossy(s / SNR_CONDITIONING_SCALE)).collect()
    }

    fn check_image(&self, len: usize) -> Result<()> {
        let want = self.config.shape.pixels();
        if len != want {
            return Err(Error::ShapeMismatch(format!("image has {len} values, model expects {want}")));
        }
        Ok(())
    }

    /// Assembles the encoder input batch. For the NOMA variant every sample
    /// needs a device; its embedding becomes the extra input plane.
    pub fn build_input(&self, images: &[&[T]], devices: &[Option<Device>]) -> Result<Act<T>> {
        assert_eq!(images.len(), devices.len());
        let s = self.config.shape;
        let plane = s.plane();
        let cin = self.config.input_channels();
        let mut x = Act::zeros(cin, images.len(), s.height, s.width);
        for (n, (img, dev)) in images.iter().zip(devices).enumerate() {
            self.check_image(img.len())?;
            for c in 0..s.channels {
                x.map_mut(c, n).copy_from_slice(&img[c * plane..(c + 1) * plane]);
            }
            if let Some(emb) = &self.embeddings {
                let d = dev.ok_or(Error::VariantMismatch("NOMA encoder input needs a device index"))?;
                let r = emb[d.index()].clone();
                x.map_mut(s.channels, n).copy_from_slice(&self.params[r]);
            }
        }
        Ok(x)
    }

    /// Batched encoder. Returns one raw (pre-normalization) latent of `2k`
    /// reals per sample.
    pub fn encode_batch(
        &self,
        images: &[&[T]],
        devices: &[Option<Device>],
        snr_db: &[f64],
    ) -> Result<(Vec<Vec<T>>, EncodeCache<T>)> {
        let x = self.build_input(images, devices)?;
        let snr = Self::conditioning(snr_db);
        let (z, inner) = self.encoder.forward(&self.params, &x, &snr);
        let latents = (0..z.n).map(|n| z.sample(n)).collect();
        Ok((latents, EncodeCache { inner, devices: devices.to_vec() }))
    }

    /// Accumulates encoder and embedding gradients from latent gradients.
    pub fn encode_backward(&self, cache: &EncodeCache<T>, d_latents: &[Vec<T>], grad: &mut [T]) {
        let (c, h, w) = cache.inner.out_shape;
        let dz = Act::from_samples(c, h, w, d_latents);
        let dx = self.encoder.backward(&self.params, &cache.inner, &dz, grad);
        if let Some(emb) = &self.embeddings {
            let ch = self.config.shape.channels;
            for (n, dev) in cache.devices.iter().enumerate() {
                let Some(d) = dev else { continue };
                let r = emb[d.index()].clone();
                grad[r].iter_mut().zip(dx.map(ch, n)).for_each(|(g, v)| *g = *g + *v);
            }
        }
    }

    /// Batched decoder over real-packed received signals. Output layout is
    /// `[slot·C_in + c][sample][h][w]`.
    pub fn decode_batch(&self, received: &[Vec<T>], snr_db: &[f64]) -> Result<(Act<T>, DecoderCache<T>)> {
        let want = self.config.latent_len();
        if let Some(bad) = received.iter().find(|r| r.len() != want) {
            return Err(Error::LengthMismatch { expected: want, actual: bad.len() });
        }
        let latent_c = self.config.latent_channels()?;
        let (h, w) = self.config.latent_hw();
        let y = Act::from_samples(latent_c, h, w, received);
        let snr = Self::conditioning(snr_db);
        Ok(self.decoder.forward(&self.params, &y, &snr))
    }

    /// Returns the gradient w.r.t. each received signal.
    pub fn decode_backward(&self, cache: &DecoderCache<T>, d_out: &Act<T>, grad: &mut [T]) -> Vec<Vec<T>> {
        let dy = self.decoder.backward(&self.params, cache, d_out, grad);
        (0..dy.n).map(|n| dy.sample(n)).collect()
    }

    /// Encodes one already-augmented input (`input_channels×H×W`).
    pub fn encode(&self, x_aug: &ImageTensor<T>, snr_db: f64) -> Result<Vec<T>> {
        let s = self.config.shape;
        if (x_aug.channels, x_aug.height, x_aug.width) != (self.config.input_channels(), s.height, s.width) {
            return Err(Error::ShapeMismatch(format!(
                "encoder input {}x{}x{} does not match model {}x{}x{}",
                x_aug.channels,
                x_aug.height,
                x_aug.width,
                self.config.input_channels(),
                s.height,
                s.width
            )));
        }
        let x = Act::from_samples(x_aug.channels, s.height, s.width, core::slice::from_ref(&x_aug.data));
        let snr = Self::conditioning(&[snr_db]);
        let (z, _) = self.encoder.forward(&self.params, &x, &snr);
        Ok(z.sample(0))
    }

    /// Decodes one received signal into one reconstruction per output slot.
    pub fn decode(&self, y: &[Complex<T>], snr_db: f64) -> Result<Vec<ImageTensor<T>>> {
        if y.len() != self.config.channel_uses {
            return Err(Error::LengthMismatch { expected: self.config.channel_uses, actual: y.len() });
        }
        let (out, _) = self.decode_batch(&[complex_to_reals(y)], &[snr_db])?;
        Ok(self.split_slots(&out, 0))
    }

    /// Reconstructions of sample `n` of a decoder output, one per slot.
    pub fn split_slots(&self, out: &Act<T>, n: usize) -> Vec<ImageTensor<T>> {
        let s = self.config.shape;
        (0..self.config.output_slots())
            .map(|slot| {
                let mut data = Vec::with_capacity(s.pixels());
                for c in 0..s.channels {
                    data.extend_from_slice(out.map(slot * s.channels + c, n));
                }
                ImageTensor::new(s.channels, s.height, s.width, data)
            })
            .collect()
    }

    /// Human-readable layer table.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!("{:<40} {:>10}\n", e.name, e.range.len()));
        }
        s.push_str(&format!("{:<40} {:>10}\n", "total", self.count_parameters()));
        s
    }
}

/// Gates of the first encoder AF module for a single augmented input, used
/// to probe SNR conditioning.
pub fn encoder_af_gates<T: Scalar>(model: &JsccModel<T>, x_aug: &ImageTensor<T>, snr_db: f64) -> Option<Vec<T>> {
    let af = model.encoder.stage1.af.as_ref()?;
    let s = model.config.shape;
    let x = Act::from_samples(x_aug.channels, s.height, s.width, core::slice::from_ref(&x_aug.data));
    let p = &model.params;
    let (pre, _) = model.encoder.conv_in.forward(p, &x);
    let h = model.encoder.act_in.forward(p, &pre);
    let (h, _) = model.encoder.stage1.residual.forward(p, &h);
    let (h, _) = model.encoder.stage1.attention.forward(p, &h);
    Some(af.gates(p, &h, &[T::from_f64_lossy(snr_db / SNR_CONDITIONING_SCALE)]))
}
