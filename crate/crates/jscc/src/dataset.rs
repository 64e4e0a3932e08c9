//! Dataset specs and loaders.
//!
//! A spec string picks the source:
//!
//! * `synthetic:COUNT:CxHxW[:SEED]`: seeded procedural images (the seed
//!   defaults to the experiment seed);
//! * `cifar10:DIR`: the CIFAR-10 binary batches (`data_batch_*.bin` for
//!   training and validation, `test_batch.bin` for testing);
//! * `images:DIR`: every PNG or JPEG file in a directory, all the same size.
//!
//! Single-pool sources are split into train, validation and test parts with
//! a seeded shuffle.

use std::fs;
use std::path::{Path, PathBuf};

use jscc_core::data::{make_test_pairs, make_validation_pairs, split_train_val, subsample_pairs, synthetic_images, ImageStore, PairDataset};
use jscc_core::model::ImageShape;
use jscc_core::rng::{stream_rng, Stream};

use crate::error::{RunError, RunResult};

pub const CIFAR_SHAPE: ImageShape = ImageShape::new(3, 32, 32);
const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
const CIFAR_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
const CIFAR_TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    Synthetic { count: usize, shape: ImageShape, seed: Option<u64> },
    Cifar10(PathBuf),
    Images(PathBuf),
}

impl DatasetSpec {
    pub fn parse(spec: &str) -> RunResult<Self> {
        let bad = |m: String| RunError::config("dataset", m);
        let (kind, rest) = spec.split_once(':').ok_or_else(|| bad(format!("{spec:?} has no source prefix")))?;
        match kind {
            "synthetic" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if !(2..=3).contains(&parts.len()) {
                    return Err(bad(format!("{spec:?} must look like synthetic:COUNT:CxHxW[:SEED]")));
                }
                let count = parts[0].parse().map_err(|_| bad(format!("bad image count {:?}", parts[0])))?;
                let shape = parse_shape(parts[1]).ok_or_else(|| bad(format!("bad shape {:?}, expected CxHxW", parts[1])))?;
                let seed = match parts.get(2) {
                    Some(s) => Some(s.parse().map_err(|_| bad(format!("bad seed {s:?}")))?),
                    None => None,
                };
                Ok(DatasetSpec::Synthetic { count, shape, seed })
            }
            "cifar10" => Ok(DatasetSpec::Cifar10(PathBuf::from(rest))),
            "images" => Ok(DatasetSpec::Images(PathBuf::from(rest))),
            other => Err(bad(format!("unknown source {other:?}; expected synthetic, cifar10 or images"))),
        }
    }

    /// Image shape without loading the whole dataset.
    pub fn shape(&self) -> RunResult<ImageShape> {
        match self {
            DatasetSpec::Synthetic { shape, .. } => Ok(*shape),
            DatasetSpec::Cifar10(_) => Ok(CIFAR_SHAPE),
            DatasetSpec::Images(dir) => {
                let first = image_files(dir)?.into_iter().next().expect("image_files is never empty");
                let (w, h) = image::image_dimensions(&first)
                    .map_err(|e| RunError::Dataset(format!("{}: {e}", first.display())))?;
                Ok(ImageShape::new(3, h as usize, w as usize))
            }
        }
    }
}

fn parse_shape(s: &str) -> Option<ImageShape> {
    let dims: Vec<usize> = s.split('x').map(|d| d.parse().ok()).collect::<Option<_>>()?;
    match dims[..] {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Some(ImageShape::new(c, h, w)),
        _ => None,
    }
}

/// One image store with disjoint index lists for each split.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub store: ImageStore,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl LoadedData {
    pub fn shape(&self) -> ImageShape {
        self.store.shape()
    }

    /// `t` unique ordered training pairs over the training images.
    pub fn train_pairs(&self, t: usize, seed: u64) -> RunResult<PairDataset> {
        let local = subsample_pairs(self.train.len(), t, false, &mut stream_rng(seed, Stream::Pairs, 0))?;
        Ok(local.remap(&self.train))
    }

    pub fn val_pairs(&self) -> RunResult<PairDataset> {
        Ok(make_validation_pairs(&self.val)?)
    }

    pub fn test_pairs(&self) -> RunResult<PairDataset> {
        Ok(make_test_pairs(&self.test)?)
    }
}

/// Loads `spec` and splits it. `test_count = None` keeps every test image
/// (CIFAR) or is an error (single-pool sources).
pub fn load(spec: &DatasetSpec, val_count: usize, test_count: Option<usize>, seed: u64) -> RunResult<LoadedData> {
    match spec {
        DatasetSpec::Synthetic { count, shape, seed: data_seed } => {
            let store = synthetic_images(*count, *shape, data_seed.unwrap_or(seed))?;
            split_pool(store, val_count, test_count, seed)
        }
        DatasetSpec::Images(dir) => split_pool(load_image_dir(dir)?, val_count, test_count, seed),
        DatasetSpec::Cifar10(dir) => {
            let mut train_store: Option<ImageStore> = None;
            for name in CIFAR_TRAIN_FILES {
                let path = dir.join(name);
                if !path.exists() {
                    continue;
                }
                let batch = read_cifar_batch(&path)?;
                match train_store.as_mut() {
                    Some(s) => s.append(&batch)?,
                    None => train_store = Some(batch),
                }
            }
            let mut store = train_store.ok_or_else(|| {
                RunError::Dataset(format!("{} holds no data_batch_*.bin files", dir.display()))
            })?;
            let n_pool = store.len();
            let test_store = read_cifar_batch(&dir.join(CIFAR_TEST_FILE))?;
            let n_test = test_count.unwrap_or(test_store.len()).min(test_store.len());
            let (train, val) = split_train_val(n_pool, val_count, seed)?;
            let test_idx: Vec<usize> = (0..n_test).collect();
            store.append(&test_store.subset(&test_idx))?;
            let test = (n_pool..n_pool + n_test).collect();
            Ok(LoadedData { store, train, val, test })
        }
    }
}

fn split_pool(store: ImageStore, val_count: usize, test_count: Option<usize>, seed: u64) -> RunResult<LoadedData> {
    let n_test = test_count.ok_or_else(|| RunError::config("test_count", "required for single-pool datasets"))?;
    let held = val_count + n_test;
    if held >= store.len() {
        return Err(RunError::Dataset(format!(
            "{} images cannot hold {val_count} validation and {n_test} test images plus a training set",
            store.len()
        )));
    }
    let (train, mut held_out) = split_train_val(store.len(), held, seed)?;
    let test = held_out.split_off(val_count);
    Ok(LoadedData { store, train, val: held_out, test })
}

/// Parses one CIFAR-10 binary batch; labels are discarded.
pub fn read_cifar_batch(path: &Path) -> RunResult<ImageStore> {
    let bytes = fs::read(path).map_err(RunError::io(path))?;
    parse_cifar_batch(&bytes).map_err(|m| RunError::Dataset(format!("{}: {m}", path.display())))
}

pub fn parse_cifar_batch(bytes: &[u8]) -> Result<ImageStore, String> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(format!("{} bytes is not a whole number of {CIFAR_RECORD}-byte records", bytes.len()));
    }
    let mut pixels = Vec::with_capacity(bytes.len() / CIFAR_RECORD * (CIFAR_RECORD - 1));
    for record in bytes.chunks_exact(CIFAR_RECORD) {
        pixels.extend_from_slice(&record[1..]);
    }
    ImageStore::new(CIFAR_SHAPE, pixels).map_err(|e| e.to_string())
}

fn image_files(dir: &Path) -> RunResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(RunError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(RunError::Dataset(format!("{} contains no PNG or JPEG images", dir.display())));
    }
    Ok(files)
}

/// Reads every PNG/JPEG in `dir` (sorted by file name) as RGB.
pub fn load_image_dir(dir: &Path) -> RunResult<ImageStore> {
    let files = image_files(dir)?;
    let mut shape = None;
    let mut pixels = Vec::new();
    for path in &files {
        let img = image::open(path).map_err(|e| RunError::Dataset(format!("{}: {e}", path.display())))?.to_rgb8();
        let s = ImageShape::new(3, img.height() as usize, img.width() as usize);
        if *shape.get_or_insert(s) != s {
            return Err(RunError::Dataset(format!(
                "{} is {}x{}, unlike the first image",
                path.display(),
                s.width,
                s.height
            )));
        }
        let plane = s.plane();
        let start = pixels.len();
        pixels.resize(start + 3 * plane, 0);
        for (i, px) in img.pixels().enumerate() {
            for c in 0..3 {
                pixels[start + c * plane + i] = px.0[c];
            }
        }
    }
    Ok(ImageStore::new(shape.expect("at least one image"), pixels)?)
}
