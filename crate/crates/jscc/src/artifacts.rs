//! Result files. Every writer goes through [`write_atomic`], so a file is
//! either complete or absent.

use std::fs;
use std::io::Write;
use std::path::Path;

use jscc_core::data::PairDataset;
use jscc_core::evaluation::{RatePoint, SweepResult, SweepRow};
use jscc_core::training::EpochRecord;
use tempfile::NamedTempFile;

use crate::error::{RunError, RunResult};

pub const SWEEP_HEADER: [&str; 4] = ["snr", "psnr", "psnr_dev1", "psnr_dev2"];
pub const HISTORY_HEADER: [&str; 3] = ["epoch", "train_loss", "val_psnr"];

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> RunResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(RunError::io(dir))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(RunError::io(dir))?;
    tmp.write_all(bytes).map_err(RunError::io(path))?;
    tmp.as_file().sync_all().map_err(RunError::io(path))?;
    tmp.persist(path).map_err(|e| RunError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn csv_bytes<I, R>(path: &Path, header: &[&str], rows: I) -> RunResult<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let to_err = |source| RunError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| RunError::Io { path: path.to_path_buf(), source: e.into_error() })
}

/// `snr,psnr,psnr_dev1,psnr_dev2`, four decimals.
pub fn write_sweep_csv(path: &Path, result: &SweepResult) -> RunResult<()> {
    let rows = result.rows.iter().map(|r| {
        [r.snr_db, r.psnr_avg, r.psnr_dev1, r.psnr_dev2].map(|v| format!("{v:.4}"))
    });
    write_atomic(path, &csv_bytes(path, &SWEEP_HEADER, rows)?)
}

pub fn read_sweep_rows(path: &Path) -> RunResult<Vec<SweepRow>> {
    let to_err = |source| RunError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(to_err)?;
    let header = r.headers().map_err(to_err)?.clone();
    if header.iter().ne(SWEEP_HEADER) {
        return Err(RunError::Dataset(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize::<(f64, f64, f64, f64)>() {
        let (snr_db, psnr_avg, psnr_dev1, psnr_dev2) = rec.map_err(to_err)?;
        rows.push(SweepRow { snr_db, psnr_avg, psnr_dev1, psnr_dev2 });
    }
    Ok(rows)
}

/// `epoch,train_loss,val_psnr` at full precision, so reruns compare
/// bit for bit.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> RunResult<()> {
    let rows = history.iter().map(|r| [r.epoch.to_string(), r.train_loss.to_string(), r.val_psnr.to_string()]);
    write_atomic(path, &csv_bytes(path, &HISTORY_HEADER, rows)?)
}

pub fn read_history_csv(path: &Path) -> RunResult<Vec<EpochRecord>> {
    let to_err = |source| RunError::Csv { path: path.to_path_buf(), source };
    let mut r = csv::Reader::from_path(path).map_err(to_err)?;
    r.deserialize::<(usize, f64, f64)>()
        .map(|rec| rec.map(|(epoch, train_loss, val_psnr)| EpochRecord { epoch, train_loss, val_psnr }).map_err(to_err))
        .collect()
}

/// `r1,r2` rate points.
pub fn write_rates_csv(path: &Path, points: &[RatePoint]) -> RunResult<()> {
    let rows = points.iter().map(|p| [format!("{:.9}", p.r1), format!("{:.9}", p.r2)]);
    write_atomic(path, &csv_bytes(path, &["r1", "r2"], rows)?)
}

/// `device1,device2` image indices, one pair per row.
pub fn write_pairs_csv(path: &Path, pairs: &PairDataset) -> RunResult<()> {
    let rows = pairs.pairs.iter().map(|(a, b)| [a.to_string(), b.to_string()]);
    write_atomic(path, &csv_bytes(path, &["device1", "device2"], rows)?)
}

/// One line per method: mean PSNR over the test SNRs and the largest
/// device gap.
pub fn write_summary_csv(path: &Path, results: &[SweepResult]) -> RunResult<()> {
    let rows = results.iter().map(|r| {
        let gap = r.rows.iter().map(SweepRow::gap).fold(0.0, f64::max);
        [r.method.name().to_string(), r.rho.to_string(), format!("{:.4}", r.mean_psnr()), format!("{gap:.4}")]
    });
    write_atomic(path, &csv_bytes(path, &["method", "rho", "mean_psnr", "max_gap"], rows)?)
}
