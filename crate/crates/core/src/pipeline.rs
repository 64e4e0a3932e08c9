//! Batched end-to-end transmission: augment, encode, power-normalize, pass
//! through the channel, decode. Shared by training and evaluation.
//!
//! A batch of `B` pairs is encoded as `2B` samples in one pass: positions
//! `0..B` are device 1, `B..2B` device 2.

use alloc::vec::Vec;

use rand::Rng;

use crate::channel::{add_noise_reals, normalize_power_backward, normalize_power_reals, snr_to_noise_variance};
use crate::model::{DecoderCache, Device, EncodeCache, JsccModel, Variant};
use crate::tensor::Act;
use crate::{Error, Result, Scalar};

/// How the two transmissions of a pair reach the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelMode {
    /// `y = z1 + z2 + n`: one shared channel realization per pair.
    Superposed,
    /// `y_i = z_i + n_i`: each device alone on its own channel uses
    /// (curriculum phase 1, the ideal-SIC bound and TDMA).
    Orthogonal,
}

/// Power and noise settings of a transmission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Average power per channel symbol enforced by normalization.
    pub tx_power: f64,
    /// Reference power `P_avg` defining the SNR: `σ² = P_avg / 10^(SNR/10)`.
    pub reference_power: f64,
}

impl LinkBudget {
    pub fn nominal(p_avg: f64) -> Self {
        Self { tx_power: p_avg, reference_power: p_avg }
    }
}

/// A batch of image pairs, normalized to `[0, 1]`, with one SNR per pair.
#[derive(Debug, Clone)]
pub struct PairBatch<T> {
    pub x1: Vec<Vec<T>>,
    pub x2: Vec<Vec<T>>,
    pub snr_db: Vec<f64>,
}

impl<T: Scalar> PairBatch<T> {
    pub fn len(&self) -> usize {
        self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty()
    }

    fn image(&self, device: Device, b: usize) -> &[T] {
        match device {
            Device::One => &self.x1[b],
            Device::Two => &self.x2[b],
        }
    }
}

/// Forward state of one batch; holds everything needed for backward.
pub struct BatchForward<T> {
    mode: ChannelMode,
    pairs: usize,
    raw: Vec<Vec<T>>,
    scales: Vec<T>,
    enc: EncodeCache<T>,
    dec: DecoderCache<T>,
    output: Act<T>,
}

impl<T: Scalar> BatchForward<T> {
    /// Decoder sample and output slot holding device `d`'s reconstruction
    /// of pair `b`.
    fn locate(&self, variant: Variant, device: Device, b: usize) -> (usize, usize) {
        let sample = match self.mode {
            ChannelMode::Superposed => b,
            ChannelMode::Orthogonal => device.index() * self.pairs + b,
        };
        let slot = match variant {
            Variant::Noma => device.index(),
            Variant::PointToPoint => 0,
        };
        (sample, slot)
    }

    /// Reconstruction of pair `b`'s image from `device`, `(c, h, w)` order.
    pub fn reconstruction(&self, model: &JsccModel<T>, device: Device, b: usize) -> Vec<T> {
        let (sample, slot) = self.locate(model.config().variant, device, b);
        let ch = model.config().shape.channels;
        let mut out = Vec::with_capacity(model.config().shape.pixels());
        for c in 0..ch {
            out.extend_from_slice(self.output.map(slot * ch + c, sample));
        }
        out
    }

    /// Power-normalized latents, `2B` of them.
    pub fn transmitted(&self) -> Vec<Vec<T>> {
        self.raw
            .iter()
            .zip(&self.scales)
            .map(|(z, s)| z.iter().map(|v| *v * *s).collect())
            .collect()
    }
}

/// Runs the full transmission chain for a batch of pairs.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    model: &JsccModel<T>,
    batch: &PairBatch<T>,
    mode: ChannelMode,
    budget: LinkBudget,
    rng: &mut R,
) -> Result<BatchForward<T>> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::EmptyDataset("empty batch"));
    }
    if batch.x1.len() != b || batch.x2.len() != b {
        return Err(Error::LengthMismatch { expected: b, actual: batch.x1.len().min(batch.x2.len()) });
    }
    let variant = model.config().variant;
    if variant == Variant::PointToPoint && mode == ChannelMode::Superposed {
        return Err(Error::VariantMismatch("a point-to-point model cannot decode a superposition"));
    }
    let mut images = Vec::with_capacity(2 * b);
    let mut devices = Vec::with_capacity(2 * b);
    for d in Device::BOTH {
        for i in 0..b {
            images.push(batch.image(d, i));
            devices.push((variant == Variant::Noma).then_some(d));
        }
    }
    let snr2: Vec<f64> = batch.snr_db.iter().chain(&batch.snr_db).copied().collect();
    let (raw, enc) = model.encode_batch(&images, &devices, &snr2)?;
    let mut scales = Vec::with_capacity(2 * b);
    let mut sent = raw.clone();
    for z in sent.iter_mut() {
        scales.push(normalize_power_reals(z, budget.tx_power)?);
    }
    let variances = batch
        .snr_db
        .iter()
        .map(|s| snr_to_noise_variance(*s, budget.reference_power))
        .collect::<Result<Vec<_>>>()?;
    let (received, dec_snr) = match mode {
        ChannelMode::Superposed => {
            let mut rx = Vec::with_capacity(b);
            for i in 0..b {
                let mut y = sent[i].clone();
                y.iter_mut().zip(&sent[b + i]).for_each(|(a, c)| *a = *a + *c);
                add_noise_reals(&mut y, variances[i], rng);
                rx.push(y);
            }
            (rx, batch.snr_db.clone())
        }
        ChannelMode::Orthogonal => {
            for (s, y) in sent.iter_mut().enumerate() {
                add_noise_reals(y, variances[s % b], rng);
            }
            (sent, snr2)
        }
    };
    let (output, dec) = model.decode_batch(&received, &dec_snr)?;
    Ok(BatchForward { mode, pairs: b, raw, scales, enc, dec, output })
}

/// Mean over pairs of `MSE(x1, x̂1) + MSE(x2, x̂2)`, accumulating its
/// gradient into `grad`. Returns the per-pair losses.
pub fn backward<T: Scalar>(
    model: &JsccModel<T>,
    batch: &PairBatch<T>,
    fwd: &BatchForward<T>,
    grad: &mut [T],
) -> Vec<f64> {
    let b = fwd.pairs;
    let variant = model.config().variant;
    let ch = model.config().shape.channels;
    let m = model.config().shape.pixels();
    let plane = model.config().shape.plane();
    let scale = T::from_f64_lossy(2.0 / (m as f64 * b as f64));
    let mut d_out = Act::zeros(fwd.output.c, fwd.output.n, fwd.output.h, fwd.output.w);
    let mut losses = alloc::vec![0.0f64; b];
    for d in Device::BOTH {
        for i in 0..b {
            let (sample, slot) = fwd.locate(variant, d, i);
            let x = batch.image(d, i);
            let mut sq = 0.0f64;
            for c in 0..ch {
                let xs = &x[c * plane..(c + 1) * plane];
                let ys = fwd.output.map(slot * ch + c, sample);
                let diffs: Vec<T> = ys.iter().zip(xs).map(|(y, x)| *y - *x).collect();
                sq += diffs.iter().map(|e| e.to_f64_lossy() * e.to_f64_lossy()).sum::<f64>();
                d_out
                    .map_mut(slot * ch + c, sample)
                    .iter_mut()
                    .zip(&diffs)
                    .for_each(|(g, e)| *g = *e * scale);
            }
            losses[i] += sq / m as f64;
        }
    }
    let d_rx = model.decode_backward(&fwd.dec, &d_out, grad);
    let d_sent: Vec<&Vec<T>> = match fwd.mode {
        ChannelMode::Superposed => d_rx.iter().chain(d_rx.iter()).collect(),
        ChannelMode::Orthogonal => d_rx.iter().collect(),
    };
    let d_raw: Vec<Vec<T>> = fwd
        .raw
        .iter()
        .zip(&fwd.scales)
        .zip(d_sent)
        .map(|((z, s), g)| normalize_power_backward(z, *s, g))
        .collect();
    model.encode_backward(&fwd.enc, &d_raw, grad);
    losses
}
