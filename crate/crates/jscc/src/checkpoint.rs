//! Model checkpoints: a small binary file (header plus little-endian `f32`
//! parameters) and a JSON manifest beside it listing the layout.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic "JSCCCKPT" | version u32 | method len u8 + utf-8 name
//! | variant u8 | C u32 | H u32 | W u32 | rho num u64 | rho den u64
//! | filters u32 | snr conditioning u8 | parameter count u64 | f32 × count
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use jscc_core::evaluation::Method;
use jscc_core::model::{ImageShape, JsccModel, ModelConfig, Rho, Variant};
use jscc_core::rng::{stream_rng, Stream};
use serde::{Deserialize, Serialize};

use crate::artifacts::write_atomic;
use crate::error::{RunError, RunResult};

pub const MAGIC: &[u8; 8] = b"JSCCCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub method: Method,
    pub model: JsccModel<f32>,
}

/// Training facts recorded in the manifest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub val_psnr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub handoff_val_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub method: String,
    pub variant: String,
    pub shape: [usize; 3],
    pub rho: String,
    pub filters: usize,
    pub channel_uses: usize,
    pub snr_conditioning: bool,
    pub parameters: usize,
    pub training: TrainingMeta,
    pub layout: Vec<ParamRange>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn encode(method: Method, model: &JsccModel<f32>) -> Vec<u8> {
    let cfg = model.config();
    let name = method.name().as_bytes();
    let mut out = Vec::with_capacity(64 + 4 * model.count_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(name.len() as u8);
    out.extend_from_slice(name);
    out.push(match cfg.variant {
        Variant::Noma => 0,
        Variant::PointToPoint => 1,
    });
    for d in [cfg.shape.channels, cfg.shape.height, cfg.shape.width] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.rho.num.to_le_bytes());
    out.extend_from_slice(&cfg.rho.den.to_le_bytes());
    out.extend_from_slice(&(cfg.filters as u32).to_le_bytes());
    out.push(cfg.snr_conditioning as u8);
    out.extend_from_slice(&(model.count_parameters() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.bytes.len() < n {
            return Err("file is truncated".into());
        }
        let (head, rest) = self.bytes.split_at(n);
        self.bytes = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes };
    if r.take(MAGIC.len())? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let name_len = r.u8()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "method name is not utf-8".to_string())?;
    let method = Method::parse(name).ok_or_else(|| format!("unknown method {name:?}"))?;
    let variant = match r.u8()? {
        0 => Variant::Noma,
        1 => Variant::PointToPoint,
        v => return Err(format!("unknown variant tag {v}")),
    };
    let shape = ImageShape::new(r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let rho = Rho::new(r.u64()?, r.u64()?).map_err(|e| e.to_string())?;
    let filters = r.u32()? as usize;
    let snr_conditioning = r.u8()? != 0;
    let count = r.u64()? as usize;
    let mut cfg = ModelConfig::build(shape, rho, filters, variant).map_err(|e| e.to_string())?;
    if !snr_conditioning {
        cfg = cfg.without_snr_conditioning();
    }
    let raw = r.take(count.checked_mul(4).ok_or("parameter count overflows")?)?;
    if !r.bytes.is_empty() {
        return Err(format!("{} trailing bytes", r.bytes.len()));
    }
    let mut model = JsccModel::new(cfg, &mut stream_rng(0, Stream::Init, 0)).map_err(|e| e.to_string())?;
    if model.count_parameters() != count {
        return Err(format!("header declares {count} parameters, architecture has {}", model.count_parameters()));
    }
    let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    model.set_params(params).map_err(|e| e.to_string())?;
    Ok(Checkpoint { method, model })
}

pub fn manifest(method: Method, model: &JsccModel<f32>, training: TrainingMeta) -> Manifest {
    let cfg = model.config();
    Manifest {
        format_version: VERSION,
        method: method.name().into(),
        variant: cfg.variant.name().into(),
        shape: [cfg.shape.channels, cfg.shape.height, cfg.shape.width],
        rho: cfg.rho.to_string(),
        filters: cfg.filters,
        channel_uses: cfg.channel_uses,
        snr_conditioning: cfg.snr_conditioning,
        parameters: model.count_parameters(),
        training,
        layout: model
            .entries()
            .iter()
            .map(|e| ParamRange { name: e.name.clone(), start: e.range.start, end: e.range.end })
            .collect(),
    }
}

/// Writes the checkpoint and its manifest, each atomically.
pub fn save(path: &Path, method: Method, model: &JsccModel<f32>, training: TrainingMeta) -> RunResult<()> {
    write_atomic(path, &encode(method, model))?;
    let json = serde_json::to_vec_pretty(&manifest(method, model, training)).expect("manifest serializes");
    write_atomic(&manifest_path(path), &json)
}

pub fn load(path: &Path) -> RunResult<Checkpoint> {
    let bytes = fs::read(path).map_err(RunError::io(path))?;
    decode(&bytes).map_err(|message| RunError::Checkpoint { path: path.to_path_buf(), message })
}

pub fn load_manifest(path: &Path) -> RunResult<Manifest> {
    let mpath = manifest_path(path);
    let bytes = fs::read(&mpath).map_err(RunError::io(&mpath))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::Checkpoint { path: mpath, message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(variant: Variant) -> JsccModel<f32> {
        let cfg = ModelConfig::build(ImageShape::new(3, 8, 8), Rho::new(1, 4).unwrap(), 4, variant).unwrap();
        JsccModel::new(cfg, &mut stream_rng(3, Stream::Init, 0)).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        for (method, variant) in [(Method::NomaCl, Variant::Noma), (Method::Tdma, Variant::PointToPoint)] {
            let m = model(variant);
            let back = decode(&encode(method, &m)).unwrap();
            assert_eq!(back.method, method);
            assert_eq!(back.model.config(), m.config());
            assert_eq!(back.model.params(), m.params());
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(Method::Noma, &model(Variant::Noma));
        assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).unwrap_err().contains("trailing"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().contains("magic"));
    }

    #[test]
    fn save_writes_a_manifest_with_the_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("noma.ckpt");
        let m = model(Variant::Noma);
        save(&path, Method::Noma, &m, TrainingMeta { epoch: 3, val_psnr: 21.5, handoff_val_psnr: None }).unwrap();
        let man = load_manifest(&path).unwrap();
        assert_eq!(man.parameters, m.count_parameters());
        assert_eq!(man.rho, "1/4");
        assert_eq!(man.training.epoch, 3);
        assert!(man.layout.iter().any(|r| r.name.contains("embedding")));
        assert_eq!(man.layout.iter().map(|r| r.end).max(), Some(m.count_parameters()));
        assert_eq!(load(&path).unwrap().model.params(), m.params());
    }
}
