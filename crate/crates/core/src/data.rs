//! Image stores, train/validation splits and pair construction.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::ImageShape;
use crate::rng::{stream_rng, Stream};
use crate::tensor::ImageTensor;
use crate::{Error, Result, Scalar};

/// Uniformly shaped 8-bit images, `[image][c][h][w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStore {
    shape: ImageShape,
    pixels: Vec<u8>,
}

impl ImageStore {
    pub fn new(shape: ImageShape, pixels: Vec<u8>) -> Result<Self> {
        let per = shape.pixels();
        if per == 0 || !pixels.len().is_multiple_of(per) {
            return Err(Error::ShapeMismatch(format!(
                "{} bytes is not a whole number of {}x{}x{} images",
                pixels.len(),
                shape.channels,
                shape.height,
                shape.width
            )));
        }
        Ok(Self { shape, pixels })
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.pixels.len() / self.shape.pixels()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        let per = self.shape.pixels();
        &self.pixels[i * per..(i + 1) * per]
    }

    /// Image `i` scaled to `[0, 1]`.
    pub fn normalized<T: Scalar>(&self, i: usize) -> Vec<T> {
        let inv = T::from_f64_lossy(1.0 / 255.0);
        self.raw(i).iter().map(|&p| T::from_u8(p).unwrap() * inv).collect()
    }

    pub fn tensor<T: Scalar>(&self, i: usize) -> ImageTensor<T> {
        let s = self.shape;
        ImageTensor::new(s.channels, s.height, s.width, self.normalized(i))
    }

    /// Keeps only the listed images, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.shape.pixels());
        for &i in indices {
            pixels.extend_from_slice(self.raw(i));
        }
        Self { shape: self.shape, pixels }
    }

    pub fn append(&mut self, other: &ImageStore) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::ShapeMismatch("cannot append images of a different shape".into()));
        }
        self.pixels.extend_from_slice(&other.pixels);
        Ok(())
    }

    /// Per-pixel mean image over the store, normalized to `[0, 1]`.
    pub fn mean_image(&self) -> Vec<f64> {
        let per = self.shape.pixels();
        let mut acc = alloc::vec![0.0f64; per];
        for i in 0..self.len() {
            acc.iter_mut().zip(self.raw(i)).for_each(|(a, &p)| *a += p as f64);
        }
        let scale = 1.0 / (255.0 * self.len().max(1) as f64);
        acc.iter_mut().for_each(|a| *a *= scale);
        acc
    }
}

/// Seeded synthetic images with CIFAR-like low-frequency structure: a
/// two-colour gradient background, a few solid circles and rectangles, and a
/// faint sinusoidal texture. Image `i` depends only on `(seed, i)`.
pub fn synthetic_images(count: usize, shape: ImageShape, seed: u64) -> Result<ImageStore> {
    if shape.pixels() == 0 {
        return Err(Error::ShapeMismatch("synthetic images need a non-empty shape".into()));
    }
    let mut pixels = Vec::with_capacity(count * shape.pixels());
    for i in 0..count {
        let mut rng = stream_rng(seed, Stream::Synthetic, i as u64);
        pixels.extend(synthetic_image(shape, &mut rng));
    }
    ImageStore::new(shape, pixels)
}

fn random_colour<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> [f64; 3] {
    let mut c = [0.0; 3];
    for v in c.iter_mut().take(channels) {
        *v = rng.random_range(0.0..1.0);
    }
    if channels == 1 {
        c[1] = c[0];
        c[2] = c[0];
    }
    c
}

fn synthetic_image<R: Rng + ?Sized>(shape: ImageShape, rng: &mut R) -> Vec<u8> {
    let (ch, h, w) = (shape.channels, shape.height, shape.width);
    let from = random_colour(ch, rng);
    let to = random_colour(ch, rng);
    let angle: f64 = rng.random_range(0.0..core::f64::consts::TAU);
    let (dx, dy) = (libm::cos(angle), libm::sin(angle));
    let mut img = alloc::vec![0.0f64; ch * h * w];
    for y in 0..h {
        for x in 0..w {
            let u = ((x as f64 / w as f64 - 0.5) * dx + (y as f64 / h as f64 - 0.5) * dy) * core::f64::consts::FRAC_1_SQRT_2 + 0.5;
            for c in 0..ch {
                img[(c * h + y) * w + x] = from[c] + (to[c] - from[c]) * u;
            }
        }
    }
    let shapes = rng.random_range(1..=3);
    for _ in 0..shapes {
        let colour = random_colour(ch, rng);
        let cx = rng.random_range(0.0..w as f64);
        let cy = rng.random_range(0.0..h as f64);
        let r = rng.random_range(0.12..0.35) * w.min(h) as f64;
        let circle = rng.random_bool(0.5);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let inside = if circle { px * px + py * py <= r * r } else { px.abs() <= r && py.abs() <= 0.7 * r };
                if inside {
                    for c in 0..ch {
                        img[(c * h + y) * w + x] = colour[c];
                    }
                }
            }
        }
    }
    let freq = rng.random_range(0.5..2.0) * core::f64::consts::TAU / w as f64;
    let phase: f64 = rng.random_range(0.0..core::f64::consts::TAU);
    for y in 0..h {
        for x in 0..w {
            let t = 0.04 * libm::sin(freq * (x as f64 + 0.7 * y as f64) + phase);
            for c in 0..ch {
                img[(c * h + y) * w + x] += t;
            }
        }
    }
    img.into_iter().map(|v| libm::round(v.clamp(0.0, 1.0) * 255.0) as u8).collect()
}

/// Seeded, disjoint and exhaustive split of `0..n`. The validation part has
/// `n_val` indices.
pub fn split_train_val(n: usize, n_val: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_val == 0 || n_val >= n {
        return Err(Error::InvalidSplit(format!("n_val = {n_val} must be in 1..{n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, Stream::Split, 0));
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

/// Ordered image pairs `(device 1 image, device 2 image)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDataset {
    pub pairs: Vec<(usize, usize)>,
    pub split: SplitTag,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// A new dataset holding the same pairs in a seeded random order.
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.shuffle(rng);
        Self { pairs, split: self.split }
    }

    /// Re-indexes pairs of positions `0..m` into an index list.
    pub fn remap(&self, indices: &[usize]) -> Self {
        Self { pairs: self.pairs.iter().map(|&(a, b)| (indices[a], indices[b])).collect(), split: self.split }
    }
}

/// Draws `t` unique ordered pairs from `0..n` without replacement.
///
/// With `allow_self == false` the diagonal `(i, i)` is excluded. Sparse
/// requests use rejection against a set of drawn pairs and never touch the
/// full `n²` candidate space; requests for more than half of the candidates
/// enumerate them instead.
pub fn subsample_pairs<R: Rng + ?Sized>(n: usize, t: usize, allow_self: bool, rng: &mut R) -> Result<PairDataset> {
    let n64 = n as u64;
    let available = if allow_self { n64 * n64 } else { n64 * n64.saturating_sub(1) };
    if t as u64 > available {
        return Err(Error::TooManyPairs { requested: t as u64, available });
    }
    let pairs = if (t as u64) * 2 > available {
        let mut all: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| allow_self || i != j).collect();
        let (chosen, _) = all.partial_shuffle(rng, t);
        chosen.to_vec()
    } else {
        let mut seen = BTreeSet::new();
        let mut pairs = Vec::with_capacity(t);
        while pairs.len() < t {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if (!allow_self && i == j) || !seen.insert(i as u64 * n64 + j as u64) {
                continue;
            }
            pairs.push((i, j));
        }
        pairs
    };
    Ok(PairDataset { pairs, split: SplitTag::Train })
}

/// Positional first-half / second-half pairing. An odd trailing element is
/// dropped.
pub fn make_validation_pairs(indices: &[usize]) -> Result<PairDataset> {
    half_pairs(indices, SplitTag::Validation)
}

/// Same pairing rule as [`make_validation_pairs`], for the test split.
pub fn make_test_pairs(indices: &[usize]) -> Result<PairDataset> {
    half_pairs(indices, SplitTag::Test)
}

fn half_pairs(indices: &[usize], split: SplitTag) -> Result<PairDataset> {
    let half = indices.len() / 2;
    if half == 0 {
        return Err(Error::EmptyDataset("pairing needs at least two images"));
    }
    let pairs = (0..half).map(|i| (indices[i], indices[i + half])).collect();
    Ok(PairDataset { pairs, split })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn synthetic_store_is_reproducible() {
        let shape = ImageShape::new(1, 8, 8);
        let a = synthetic_images(16, shape, 7).unwrap();
        let b = synthetic_images(16, shape, 7).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_images(16, shape, 8).unwrap());
        // Prefix stability: image i does not depend on the count.
        assert_eq!(synthetic_images(4, shape, 7).unwrap().raw(3), a.raw(3));
        let img = a.normalized::<f32>(0);
        assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn store_rejects_ragged_buffers() {
        assert!(ImageStore::new(ImageShape::new(3, 2, 2), alloc::vec![0; 13]).is_err());
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let (train, val) = split_train_val(50_000, 5_000, 1).unwrap();
        assert_eq!((train.len(), val.len()), (45_000, 5_000));
        let mut all: Vec<_> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &v)| i == v));
        assert_eq!(split_train_val(50_000, 5_000, 1).unwrap().1, val);
        assert!(split_train_val(10, 10, 1).is_err());
        assert!(split_train_val(10, 0, 1).is_err());
    }

    #[test]
    fn full_enumeration_when_every_pair_is_requested() {
        let mut rng = stream_rng(0, Stream::Pairs, 0);
        let ds = subsample_pairs(3, 6, false, &mut rng).unwrap();
        let mut pairs = ds.pairs.clone();
        pairs.sort_unstable();
        assert_eq!(pairs, alloc::vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        assert_eq!(
            subsample_pairs(3, 10, false, &mut rng),
            Err(Error::TooManyPairs { requested: 10, available: 6 })
        );
        assert_eq!(subsample_pairs(3, 9, true, &mut rng).unwrap().len(), 9);
    }

    #[test]
    fn validation_and_test_pairing() {
        let v = make_validation_pairs(&[0, 1, 2, 3]).unwrap();
        assert_eq!(v.pairs, alloc::vec![(0, 2), (1, 3)]);
        let idx: Vec<usize> = (0..5000).collect();
        assert_eq!(make_validation_pairs(&idx).unwrap().len(), 2500);
        let idx: Vec<usize> = (0..10_000).collect();
        let t = make_test_pairs(&idx).unwrap();
        assert_eq!(t.len(), 5000);
        let mut seen: Vec<usize> = t.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.sort_unstable();
        assert_eq!(seen, idx);
        assert!(make_validation_pairs(&[4]).is_err());
        assert_eq!(make_validation_pairs(&[0, 1, 2]).unwrap().pairs, alloc::vec![(0, 1)]);
    }

    proptest! {
        #[test]
        fn sampled_pairs_are_unique_in_range_and_reproducible(n in 2usize..40, frac in 0.0f64..1.0, seed in 0u64..1000) {
            let available = n * (n - 1);
            let t = ((available as f64) * frac) as usize;
            let a = subsample_pairs(n, t, false, &mut stream_rng(seed, Stream::Pairs, 0)).unwrap();
            let b = subsample_pairs(n, t, false, &mut stream_rng(seed, Stream::Pairs, 0)).unwrap();
            prop_assert_eq!(&a, &b);
            let set: BTreeSet<_> = a.pairs.iter().copied().collect();
            prop_assert_eq!(set.len(), t);
            prop_assert!(a.pairs.iter().all(|&(i, j)| i < n && j < n && i != j));
        }

        #[test]
        fn shuffling_preserves_the_pair_multiset(seed in 0u64..1000) {
            let ds = subsample_pairs(30, 100, false, &mut stream_rng(seed, Stream::Pairs, 0)).unwrap();
            let shuffled = ds.shuffled(&mut stream_rng(seed, Stream::Shuffle, 1));
            let mut a = ds.pairs.clone();
            let mut b = shuffled.pairs.clone();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
