//! SVG figures: PSNR against test SNR, per-device fairness curves and the
//! MAC capacity region.

use std::path::Path;

use jscc_core::evaluation::RatePoint;
use plotters::prelude::*;

use crate::error::{RunError, RunResult};
use crate::experiment::LabeledSweep;

const SIZE: (u32, u32) = (720, 480);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

struct Series<'a> {
    label: String,
    points: Vec<(f64, f64)>,
    color: &'a RGBColor,
    dashed: bool,
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    let pad = ((hi - lo) * 0.08).max(0.5);
    (lo - pad)..(hi + pad)
}

fn render(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> RunResult<()> {
    let err = |e: &dyn std::fmt::Display| RunError::Plot { path: path.to_path_buf(), message: e.to_string() };
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return Err(err(&"nothing to plot"));
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(|e| err(&e))?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 20))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(50)
            .build_cartesian_2d(padded(x0, x1), padded(y0, y1))
            .map_err(|e| err(&e))?;
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(|e| err(&e))?;
        for s in series {
            let style = s.color.stroke_width(2);
            let line = LineSeries::new(s.points.iter().copied(), style);
            let anno = if s.dashed {
                chart.draw_series(DashedLineSeries::new(s.points.iter().copied(), 6, 4, style)).map_err(|e| err(&e))?
            } else {
                chart.draw_series(line).map_err(|e| err(&e))?
            };
            let color = *s.color;
            anno.label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
            chart
                .draw_series(s.points.iter().map(|&p| Circle::new(p, 3, s.color.filled())))
                .map_err(|e| err(&e))?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(|e| err(&e))?;
        root.present().map_err(|e| err(&e))?;
    }
    crate::artifacts::write_atomic(path, svg.as_bytes())
}

/// Average PSNR against test SNR, one curve per method.
pub fn psnr_vs_snr(path: &Path, sweeps: &[LabeledSweep]) -> RunResult<()> {
    let series: Vec<Series> = sweeps
        .iter()
        .zip(PALETTE.iter().cycle())
        .map(|(s, color)| Series {
            label: format!("{} (rho {})", s.label, s.result.rho),
            points: s.result.rows.iter().map(|row| (row.snr_db, row.psnr_avg)).collect(),
            color,
            dashed: false,
        })
        .collect();
    render(path, "PSNR vs test SNR", "SNR_test (dB)", "PSNR (dB)", &series)
}

/// Device 1 (solid) and device 2 (dashed) PSNR for each method.
pub fn fairness(path: &Path, sweeps: &[LabeledSweep]) -> RunResult<()> {
    let mut series = Vec::new();
    for (s, color) in sweeps.iter().zip(PALETTE.iter().cycle()) {
        let r = &s.result;
        series.push(Series {
            label: format!("{} device 1", s.label),
            points: r.rows.iter().map(|row| (row.snr_db, row.psnr_dev1)).collect(),
            color,
            dashed: false,
        });
        series.push(Series {
            label: format!("{} device 2", s.label),
            points: r.rows.iter().map(|row| (row.snr_db, row.psnr_dev2)).collect(),
            color,
            dashed: true,
        });
    }
    render(path, "Per-device PSNR", "SNR_test (dB)", "PSNR (dB)", &series)
}

/// Capacity pentagon boundary and the TDMA rate line.
pub fn capacity_region(path: &Path, region: &[RatePoint], tdma: &[RatePoint]) -> RunResult<()> {
    let mut boundary: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    boundary.extend(region.iter().map(|p| (p.r1, p.r2)));
    boundary.push((0.0, 0.0));
    let series = [
        Series { label: "capacity region".into(), points: boundary, color: &PALETTE[0], dashed: false },
        Series { label: "TDMA".into(), points: tdma.iter().map(|p| (p.r1, p.r2)).collect(), color: &PALETTE[1], dashed: true },
    ];
    render(path, "Two-user Gaussian MAC", "R1 (bits/channel use)", "R2 (bits/channel use)", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use jscc_core::evaluation::{mac_capacity_region, tdma_rates, Method, SweepResult, SweepRow};
    use jscc_core::model::Rho;

    #[test]
    fn figures_are_written_as_svg() {
        let dir = tempfile::tempdir().unwrap();
        let r = SweepResult {
            method: Method::NomaCl,
            rho: Rho::new(1, 3).unwrap(),
            rows: vec![SweepRow::new(0.0, 20.0, 20.5), SweepRow::new(10.0, 24.0, 24.2)],
        };
        let sweeps = [LabeledSweep { label: "noma-cl".into(), result: r }];
        psnr_vs_snr(&dir.path().join("psnr.svg"), &sweeps).unwrap();
        fairness(&dir.path().join("fair.svg"), &sweeps).unwrap();
        let region = mac_capacity_region(1.0, 1.0, 1.0, 8).unwrap();
        let tdma = tdma_rates(1.0, 1.0, 1.0, &[0.0, 0.5, 1.0]).unwrap();
        capacity_region(&dir.path().join("region.svg"), &region, &tdma).unwrap();
        for f in ["psnr.svg", "fair.svg", "region.svg"] {
            let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
            assert!(text.starts_with("<svg"), "{f}");
        }
    }
}
