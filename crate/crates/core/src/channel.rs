//! Complex AWGN channels, power normalization and SNR bookkeeping.
//!
//! Latents travel through the network as real vectors of length `2k`;
//! consecutive pairs `(v[2j], v[2j+1])` are the real and imaginary parts of
//! channel symbol `j`. The mapping preserves the squared norm, so the power
//! constraint can be checked in either representation.

use alloc::vec::Vec;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Scalar};

/// An AWGN channel operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub snr_db: f64,
    pub p_avg: f64,
    pub noise_variance: f64,
}

impl ChannelSpec {
    pub fn from_snr(snr_db: f64, p_avg: f64) -> Result<Self> {
        Ok(Self { snr_db, p_avg, noise_variance: snr_to_noise_variance(snr_db, p_avg)? })
    }
}

/// `σ² = P_avg / 10^(SNR/10)`.
pub fn snr_to_noise_variance(snr_db: f64, p_avg: f64) -> Result<f64> {
    if !(p_avg > 0.0) {
        return Err(Error::NonPositivePower(p_avg));
    }
    Ok(p_avg / libm::pow(10.0, snr_db / 10.0))
}

/// Inverse of [`snr_to_noise_variance`].
pub fn noise_variance_to_snr(noise_variance: f64, p_avg: f64) -> Result<f64> {
    if !(p_avg > 0.0) {
        return Err(Error::NonPositivePower(p_avg));
    }
    if !(noise_variance > 0.0) {
        return Err(Error::NonPositivePower(noise_variance));
    }
    Ok(10.0 * libm::log10(p_avg / noise_variance))
}

/// `k` complex channel symbols emitted by one transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector<T> {
    pub symbols: Vec<Complex<T>>,
}

impl<T: Scalar> LatentVector<T> {
    pub fn new(symbols: Vec<Complex<T>>) -> Self {
        Self { symbols }
    }

    pub fn from_reals(v: &[T]) -> Result<Self> {
        reals_to_complex(v).map(Self::new)
    }

    pub fn zeros(k: usize) -> Self {
        Self { symbols: alloc::vec![Complex::new(T::zero(), T::zero()); k] }
    }

    /// Number of channel uses.
    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn energy(&self) -> T {
        self.symbols.iter().map(|s| s.norm_sqr()).sum()
    }

    /// `(1/k)‖z‖²`.
    pub fn average_power(&self) -> T {
        self.energy() / T::from_usize(self.k().max(1)).unwrap()
    }

    pub fn to_reals(&self) -> Vec<T> {
        complex_to_reals(&self.symbols)
    }
}

/// Pairs consecutive reals into complex symbols.
pub fn reals_to_complex<T: Scalar>(v: &[T]) -> Result<Vec<Complex<T>>> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::OddLength(v.len()));
    }
    Ok(v.chunks_exact(2).map(|p| Complex::new(p[0], p[1])).collect())
}

pub fn complex_to_reals<T: Scalar>(z: &[Complex<T>]) -> Vec<T> {
    z.iter().flat_map(|s| [s.re, s.im]).collect()
}

/// Scales `z` to average power exactly `p_avg`.
pub fn normalize_power<T: Scalar>(z: &LatentVector<T>, p_avg: f64) -> Result<LatentVector<T>> {
    let mut reals = z.to_reals();
    normalize_power_reals(&mut reals, p_avg)?;
    LatentVector::from_reals(&reals)
}

/// In-place power normalization of a real-packed latent (`2k` reals).
///
/// Returns the applied scale `sqrt(k·P / ‖z‖²)`.
pub fn normalize_power_reals<T: Scalar>(z: &mut [T], p_avg: f64) -> Result<T> {
    if !(p_avg > 0.0) {
        return Err(Error::NonPositivePower(p_avg));
    }
    if !z.len().is_multiple_of(2) {
        return Err(Error::OddLength(z.len()));
    }
    let k = (z.len() / 2) as f64;
    // Accumulate in f64 so the equality holds to ~1e-7 even for f32 latents.
    let energy: f64 = z.iter().map(|v| v.to_f64_lossy() * v.to_f64_lossy()).sum();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::DegenerateLatent);
    }
    let scale = T::from_f64_lossy(libm::sqrt(k * p_avg / energy));
    z.iter_mut().for_each(|v| *v = *v * scale);
    Ok(scale)
}

/// Backward pass of [`normalize_power_reals`].
///
/// `raw` is the latent before scaling, `scale` the factor that was applied,
/// `grad_out` the gradient w.r.t. the normalized latent. Since the output is
/// `sqrt(kP)·z/‖z‖`, the gradient is `scale·(g − z·(z·g)/‖z‖²)`.
pub fn normalize_power_backward<T: Scalar>(raw: &[T], scale: T, grad_out: &[T]) -> Vec<T> {
    let energy: T = raw.iter().map(|v| *v * *v).sum();
    let dot: T = raw.iter().zip(grad_out).map(|(z, g)| *z * *g).sum();
    let coeff = dot / energy;
    raw.iter().zip(grad_out).map(|(z, g)| scale * (*g - *z * coeff)).collect()
}

/// Adds circularly-symmetric complex Gaussian noise with per-symbol variance
/// `noise_variance` to a real-packed signal (each real component gets
/// variance `noise_variance / 2`).
pub fn add_noise_reals<T: Scalar, R: Rng + ?Sized>(signal: &mut [T], noise_variance: f64, rng: &mut R) {
    if noise_variance == 0.0 {
        return;
    }
    let std = libm::sqrt(noise_variance / 2.0);
    for v in signal.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v = *v + T::from_f64_lossy(n * std);
    }
}

fn check_variance(noise_variance: f64) -> Result<()> {
    if noise_variance >= 0.0 && noise_variance.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositivePower(noise_variance))
    }
}

/// `y = z1 + z2 + n` with `n ~ CN(0, σ² I_k)`.
pub fn transmit_mac<T: Scalar, R: Rng + ?Sized>(
    z1: &LatentVector<T>,
    z2: &LatentVector<T>,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex<T>>> {
    if z1.k() != z2.k() {
        return Err(Error::LengthMismatch { expected: z1.k(), actual: z2.k() });
    }
    check_variance(noise_variance)?;
    let mut y: Vec<T> = z1.to_reals();
    y.iter_mut().zip(z2.to_reals()).for_each(|(a, b)| *a = *a + b);
    add_noise_reals(&mut y, noise_variance, rng);
    reals_to_complex(&y)
}

/// `y = z + n`, the interference-free link.
pub fn transmit_p2p<T: Scalar, R: Rng + ?Sized>(
    z: &LatentVector<T>,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex<T>>> {
    check_variance(noise_variance)?;
    let mut y = z.to_reals();
    add_noise_reals(&mut y, noise_variance, rng);
    reals_to_complex(&y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use proptest::prelude::*;

    fn latent(v: &[f64]) -> LatentVector<f64> {
        LatentVector::from_reals(v).unwrap()
    }

    #[test]
    fn snr_conversion_examples() {
        assert_eq!(snr_to_noise_variance(0.0, 0.5).unwrap(), 0.5);
        assert!((snr_to_noise_variance(10.0, 0.5).unwrap() - 0.05).abs() < 1e-15);
        assert!((snr_to_noise_variance(20.0, 1.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(snr_to_noise_variance(10.0, 0.0).is_err());
        assert!(snr_to_noise_variance(10.0, -1.0).is_err());
        let spec = ChannelSpec::from_snr(10.0, 0.5).unwrap();
        assert!((spec.noise_variance - 0.05).abs() < 1e-15);
    }

    #[test]
    fn normalize_power_examples() {
        let z = latent(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let out = normalize_power(&z, 0.5).unwrap();
        for s in &out.symbols {
            assert!((s.re - 0.5f64.sqrt()).abs() < 1e-12);
            assert_eq!(s.im, 0.0);
        }
        // Already at the target power: unchanged.
        let z = latent(&[0.5, 0.5, -0.5, 0.5]);
        assert!((z.average_power() - 0.5).abs() < 1e-15);
        let out = normalize_power(&z, 0.5).unwrap();
        for (a, b) in out.symbols.iter().zip(&z.symbols) {
            assert!((a - b).norm_sqr().sqrt() < 1e-15);
        }
        assert_eq!(normalize_power(&LatentVector::<f64>::zeros(4), 0.5), Err(Error::DegenerateLatent));
    }

    #[test]
    fn pairing_convention_and_norm() {
        let z = reals_to_complex(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(z, alloc::vec![Complex::new(1.0, 2.0), Complex::new(3.0, 4.0)]);
        assert_eq!(complex_to_reals(&z), alloc::vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(latent(&[3.0, 4.0]).energy(), 25.0);
        assert_eq!(reals_to_complex(&[1.0f64, 2.0, 3.0]), Err(Error::OddLength(3)));
    }

    #[test]
    fn zero_noise_channels_are_linear() {
        let mut rng = stream_rng(1, Stream::Noise, 0);
        let z1 = latent(&[1.0, -2.0, 0.5, 0.25]);
        let z2 = latent(&[0.125, 3.0, -1.0, 2.0]);
        let y = transmit_mac(&z1, &z2, 0.0, &mut rng).unwrap();
        let want: Vec<_> = z1.symbols.iter().zip(&z2.symbols).map(|(a, b)| a + b).collect();
        assert_eq!(y, want);
        let y = transmit_mac(&z1, &LatentVector::zeros(2), 0.0, &mut rng).unwrap();
        assert_eq!(y, z1.symbols);
        assert_eq!(transmit_p2p(&z1, 0.0, &mut rng).unwrap(), z1.symbols);
        assert!(transmit_mac(&z1, &LatentVector::zeros(3), 0.0, &mut rng).is_err());
        assert!(transmit_p2p(&z1, -1.0, &mut rng).is_err());
    }

    #[test]
    fn p2p_noise_statistics_and_determinism() {
        let n = 100_000;
        let var = 0.05;
        let z = LatentVector::<f64>::zeros(n);
        let y = transmit_p2p(&z, var, &mut stream_rng(3, Stream::Noise, 0)).unwrap();
        let again = transmit_p2p(&z, var, &mut stream_rng(3, Stream::Noise, 0)).unwrap();
        assert_eq!(y, again);
        let mean = y.iter().sum::<Complex<f64>>() / n as f64;
        let power = y.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
        assert!(mean.norm_sqr().sqrt() < 5.0 * (var / n as f64).sqrt());
        assert!((power - var).abs() / var < 0.02, "empirical variance {power}");
        // Real and imaginary parts each carry half the variance.
        let re = y.iter().map(|s| s.re * s.re).sum::<f64>() / n as f64;
        assert!((re - var / 2.0).abs() / (var / 2.0) < 0.03);
    }

    #[test]
    fn normalize_backward_matches_finite_differences() {
        let raw = [0.3, -1.2, 0.7, 2.0, -0.4, 0.9];
        let g = [0.5, 0.1, -0.3, 0.8, 0.2, -0.6];
        let mut out = raw;
        let scale = normalize_power_reals(&mut out, 0.5).unwrap();
        let grad = normalize_power_backward(&raw, scale, &g);
        let objective = |v: &[f64]| {
            let mut w = v.to_vec();
            normalize_power_reals(&mut w, 0.5).unwrap();
            w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        for i in 0..raw.len() {
            let h = 1e-6;
            let mut p = raw;
            p[i] += h;
            let mut m = raw;
            m[i] -= h;
            let fd = (objective(&p) - objective(&m)) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "{i}: {fd} vs {}", grad[i]);
        }
    }

    proptest! {
        #[test]
        fn normalized_power_equals_budget(v in proptest::collection::vec(-10.0f64..10.0, 2..64), p in 0.01f64..4.0) {
            let len = v.len() & !1;
            prop_assume!(v[..len].iter().any(|x| *x != 0.0));
            let out = normalize_power(&latent(&v[..len]), p).unwrap();
            prop_assert!((out.average_power() - p).abs() / p < 1e-9);
        }

        #[test]
        fn snr_conversion_round_trips(snr in -10.0f64..30.0, p in 0.01f64..10.0) {
            let var = snr_to_noise_variance(snr, p).unwrap();
            let back = noise_variance_to_snr(var, p).unwrap();
            prop_assert!((back - snr).abs() <= 1e-9 * snr.abs().max(1.0));
        }

        #[test]
        fn real_complex_round_trip(v in proptest::collection::vec(-1e3f64..1e3, 0..40)) {
            let len = v.len() & !1;
            let z = reals_to_complex(&v[..len]).unwrap();
            prop_assert_eq!(complex_to_reals(&z), v[..len].to_vec());
        }
    }
}
