//! Batched activations and the im2col / col2im lowering used by every
//! convolution.
//!
//! Activations are stored channel-major with the batch folded in,
//! `[channel][sample][row][col]`, so a convolution is one GEMM of the weight
//! matrix against the column buffer of the whole batch and its result lands
//! directly in the same layout.

use alloc::vec;
use alloc::vec::Vec;

use crate::Scalar;

/// A batch of feature maps, layout `[c][n][h][w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Act<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Self { c, n, h, w, data: vec![T::zero(); c * n * h * w] }
    }

    pub fn from_data(c: usize, n: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "activation buffer size");
        Self { c, n, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Columns of the GEMM view: `n·h·w`.
    pub fn cols(&self) -> usize {
        self.n * self.h * self.w
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.c, self.n, self.h, self.w) == (other.c, other.n, other.h, other.w)
    }

    /// Slice holding channel `c` of sample `n`.
    pub fn map(&self, c: usize, n: usize) -> &[T] {
        let p = self.plane();
        let off = (c * self.n + n) * p;
        &self.data[off..off + p]
    }

    pub fn map_mut(&mut self, c: usize, n: usize) -> &mut [T] {
        let p = self.plane();
        let off = (c * self.n + n) * p;
        &mut self.data[off..off + p]
    }

    /// Sample `n` flattened in `(c, h, w)` order.
    pub fn sample(&self, n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.c * self.plane());
        for c in 0..self.c {
            out.extend_from_slice(self.map(c, n));
        }
        out
    }

    /// Inverse of [`Act::sample`] for every sample of the batch.
    pub fn from_samples(c: usize, h: usize, w: usize, samples: &[Vec<T>]) -> Self {
        let n = samples.len();
        let mut act = Self::zeros(c, n, h, w);
        let p = h * w;
        for (i, s) in samples.iter().enumerate() {
            assert_eq!(s.len(), c * p, "sample length");
            for ch in 0..c {
                act.map_mut(ch, i).copy_from_slice(&s[ch * p..(ch + 1) * p]);
            }
        }
        act
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert!(self.same_shape(other));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a = *a + *b);
    }
}

/// One image, layout `[c][h][w]`, values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "image buffer size");
        Self { channels, height, width, data }
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::new(channels, height, width, vec![T::zero(); channels * height * width])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        (self.channels, self.height, self.width) == (other.channels, other.height, other.width)
    }
}

/// Geometry shared by a convolution and its transpose.
///
/// `in_*` is the image side (the input of a convolution, the output of a
/// transposed convolution); `out_*` is the column side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Output extent of a convolution over `size` input pixels.
    pub fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
        (size + 2 * pad - kernel) / stride + 1
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Source pixel of column position `o` under kernel tap `t`, or `None`
    /// when it falls into the zero padding.
    #[inline]
    fn source(&self, o: usize, t: usize, size: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < size).then_some(pos as usize)
    }
}

/// Lowers `x` (`g.channels` channels, `g.in_h×g.in_w`) into a column buffer
/// of shape `[channels·k·k][n·out_h·out_w]`.
pub fn im2col<T: Scalar>(x: &Act<T>, g: &ConvGeometry) -> Vec<T> {
    assert_eq!((x.c, x.h, x.w), (g.channels, g.in_h, g.in_w));
    let n = x.n;
    let out_plane = g.out_h * g.out_w;
    let cols = n * out_plane;
    let mut buf = vec![T::zero(); g.rows() * cols];
    for c in 0..g.channels {
        for kr in 0..g.kernel {
            for kc in 0..g.kernel {
                let row = (c * g.kernel + kr) * g.kernel + kc;
                let dst_row = &mut buf[row * cols..(row + 1) * cols];
                for s in 0..n {
                    let src = x.map(c, s);
                    let dst = &mut dst_row[s * out_plane..(s + 1) * out_plane];
                    for oh in 0..g.out_h {
                        let Some(ih) = g.source(oh, kr, g.in_h) else { continue };
                        let src_row = &src[ih * g.in_w..(ih + 1) * g.in_w];
                        let dst_line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                        if g.stride == 1 {
                            // Contiguous run of valid columns.
                            let lo = g.pad.saturating_sub(kc);
                            let hi = (g.in_w + g.pad).saturating_sub(kc).min(g.out_w);
                            if lo < hi {
                                let start = lo + kc - g.pad;
                                dst_line[lo..hi].copy_from_slice(&src_row[start..start + hi - lo]);
                            }
                        } else {
                            for (ow, d) in dst_line.iter_mut().enumerate() {
                                if let Some(iw) = g.source(ow, kc, g.in_w) {
                                    *d = src_row[iw];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    buf
}

/// Adjoint of [`im2col`]: scatters a column buffer back onto an image
/// batch of `n` samples, summing overlapping taps.
pub fn col2im<T: Scalar>(buf: &[T], n: usize, g: &ConvGeometry) -> Act<T> {
    let out_plane = g.out_h * g.out_w;
    let cols = n * out_plane;
    assert_eq!(buf.len(), g.rows() * cols);
    let mut x = Act::zeros(g.channels, n, g.in_h, g.in_w);
    for c in 0..g.channels {
        for kr in 0..g.kernel {
            for kc in 0..g.kernel {
                let row = (c * g.kernel + kr) * g.kernel + kc;
                let src_row = &buf[row * cols..(row + 1) * cols];
                for s in 0..n {
                    let src = &src_row[s * out_plane..(s + 1) * out_plane];
                    let in_w = g.in_w;
                    let dst = x.map_mut(c, s);
                    for oh in 0..g.out_h {
                        let Some(ih) = g.source(oh, kr, g.in_h) else { continue };
                        let dst_row = &mut dst[ih * in_w..(ih + 1) * in_w];
                        let src_line = &src[oh * g.out_w..(oh + 1) * g.out_w];
                        for (ow, v) in src_line.iter().enumerate() {
                            if let Some(iw) = g.source(ow, kc, in_w) {
                                dst_row[iw] = dst_row[iw] + *v;
                            }
                        }
                    }
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry(c: usize, k: usize, s: usize, p: usize, h: usize, w: usize) -> ConvGeometry {
        ConvGeometry {
            channels: c,
            kernel: k,
            stride: s,
            pad: p,
            in_h: h,
            in_w: w,
            out_h: ConvGeometry::conv_out(h, k, s, p),
            out_w: ConvGeometry::conv_out(w, k, s, p),
        }
    }

    #[test]
    fn col2im_is_the_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)> for arbitrary x, y.
        for &(k, s, p, h, w) in &[(3, 1, 1, 5, 4), (3, 2, 1, 6, 6), (1, 1, 0, 3, 3), (3, 2, 1, 4, 4)] {
            let g = geometry(2, k, s, p, h, w);
            let n = 3;
            let x = Act::from_data(2, n, h, w, (0..2 * n * h * w).map(|i| ((i * 7 % 11) as f64) - 5.0).collect());
            let cols = im2col(&x, &g);
            let y: Vec<f64> = (0..cols.len()).map(|i| ((i * 5 % 13) as f64) * 0.5 - 3.0).collect();
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let back = col2im(&y, n, &g);
            let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9, "{k} {s} {p}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn im2col_centre_tap_copies_the_input() {
        let g = geometry(1, 3, 1, 1, 3, 3);
        let x = Act::from_data(1, 1, 3, 3, (1..=9).map(|v| v as f64).collect());
        let cols = im2col(&x, &g);
        // Centre tap (kr = kc = 1) is row 4.
        assert_eq!(&cols[4 * 9..5 * 9], &x.data[..]);
        // Top-left tap sees padding on the first row and column.
        assert_eq!(&cols[0..9], &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 4.0, 5.0]);
    }

    #[test]
    fn sample_round_trip() {
        let a = Act::from_data(2, 3, 1, 2, (0..12).map(|v| v as f64).collect());
        let samples: Vec<_> = (0..3).map(|i| a.sample(i)).collect();
        assert_eq!(samples[1], alloc::vec![2.0, 3.0, 8.0, 9.0]);
        assert_eq!(Act::from_samples(2, 1, 2, &samples), a);
    }
}
