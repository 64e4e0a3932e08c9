//! PSNR, SNR sweeps for every transmission scheme, fairness, and the
//! analytic two-user Gaussian MAC capacity region.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{ImageStore, PairDataset};
use crate::model::{Device, JsccModel, Rho, Variant};
use crate::pipeline::{self, ChannelMode, LinkBudget};
use crate::rng::{stream_rng, Stream};
use crate::training::{assemble_batch, mse};
use crate::{Error, Result, Scalar};

/// Aggregates replace the infinite PSNR of a perfect reconstruction with
/// this value.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Pairs per forward pass during evaluation.
pub const EVAL_BATCH: usize = 64;

/// `10·log10(A² / MSE)`; `+∞` for identical inputs.
pub fn psnr<T: Scalar>(x: &[T], x_hat: &[T], max_value: f64) -> Result<f64> {
    if !(max_value > 0.0) {
        return Err(Error::InvalidConfig(format!("max_value must be positive, got {max_value}")));
    }
    let err = mse(x, x_hat)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(max_value * max_value / err))
}

/// PSNR on `[0, 1]` data, capped for averaging.
pub fn capped_psnr<T: Scalar>(x: &[T], x_hat: &[T]) -> Result<f64> {
    Ok(psnr(x, x_hat, 1.0)?.min(PSNR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Noma,
    NomaCl,
    Tdma,
    SingleUser,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Noma, Method::NomaCl, Method::Tdma, Method::SingleUser];

    pub fn name(self) -> &'static str {
        match self {
            Method::Noma => "noma",
            Method::NomaCl => "noma-cl",
            Method::Tdma => "tdma",
            Method::SingleUser => "single-user",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Model variant the method trains.
    pub fn variant(self) -> Variant {
        match self {
            Method::Tdma => Variant::PointToPoint,
            _ => Variant::Noma,
        }
    }

    /// Channel the method is tested on.
    pub fn test_mode(self) -> ChannelMode {
        match self {
            Method::Noma | Method::NomaCl => ChannelMode::Superposed,
            Method::Tdma | Method::SingleUser => ChannelMode::Orthogonal,
        }
    }
}

/// Per-symbol transmit power of the TDMA baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TdmaPower {
    /// `p_avg` per symbol, like every other scheme.
    #[default]
    Nominal,
    /// `2·p_avg` per symbol over half the channel uses, so each user spends
    /// the same total energy as under NOMA.
    EnergyEqualized,
}

impl TdmaPower {
    pub fn budget(self, p_avg: f64) -> LinkBudget {
        match self {
            TdmaPower::Nominal => LinkBudget::nominal(p_avg),
            TdmaPower::EnergyEqualized => LinkBudget { tx_power: 2.0 * p_avg, reference_power: p_avg },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub psnr_avg: f64,
    pub psnr_dev1: f64,
    pub psnr_dev2: f64,
}

impl SweepRow {
    pub fn new(snr_db: f64, psnr_dev1: f64, psnr_dev2: f64) -> Self {
        Self { snr_db, psnr_avg: 0.5 * (psnr_dev1 + psnr_dev2), psnr_dev1, psnr_dev2 }
    }

    pub fn gap(&self) -> f64 {
        (self.psnr_dev1 - self.psnr_dev2).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub method: Method,
    pub rho: Rho,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Mean of the average-PSNR column over all test SNRs.
    pub fn mean_psnr(&self) -> f64 {
        self.rows.iter().map(|r| r.psnr_avg).sum::<f64>() / self.rows.len() as f64
    }

    pub fn row(&self, snr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db)
    }
}

/// Shared settings of an SNR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Test SNRs (dB), strictly increasing.
    pub snrs: Vec<f64>,
    pub p_avg: f64,
    /// Seeds the test noise; reusing it across methods pairs their channel
    /// realizations.
    pub seed: u64,
    pub tdma_power: TdmaPower,
}

impl SweepConfig {
    pub fn new(snrs: Vec<f64>, p_avg: f64, seed: u64) -> Self {
        Self { snrs, p_avg, seed, tdma_power: TdmaPower::Nominal }
    }

    pub fn validate(&self) -> Result<()> {
        if self.snrs.is_empty() {
            return Err(Error::InvalidConfig("snr_test must not be empty".into()));
        }
        if self.snrs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("snr_test must be strictly increasing".into()));
        }
        if !(self.p_avg > 0.0) {
            return Err(Error::InvalidConfig(format!("p_avg must be positive, got {}", self.p_avg)));
        }
        Ok(())
    }
}

/// Mean capped PSNR of each device over `pairs` at one SNR.
fn device_psnrs<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    mode: ChannelMode,
    budget: LinkBudget,
    snr_db: f64,
    rng: &mut crate::rng::ChaCha8Rng,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("evaluation pairs"));
    }
    let mut sums = [0.0f64; 2];
    for chunk in pairs.pairs.chunks(EVAL_BATCH) {
        let batch = assemble_batch::<T>(store, chunk, alloc::vec![snr_db; chunk.len()]);
        let fwd = pipeline::forward(model, &batch, mode, budget, rng)?;
        for b in 0..chunk.len() {
            for d in Device::BOTH {
                let x = match d {
                    Device::One => &batch.x1[b],
                    Device::Two => &batch.x2[b],
                };
                sums[d.index()] += capped_psnr(x, &fwd.reconstruction(model, d, b))?;
            }
        }
    }
    let n = pairs.len() as f64;
    Ok((sums[0] / n, sums[1] / n))
}

/// Runs the full transmission chain over every test pair at every test SNR.
pub fn evaluate_sweep<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    mode: ChannelMode,
    budget: LinkBudget,
    cfg: &SweepConfig,
    method: Method,
) -> Result<SweepResult> {
    cfg.validate()?;
    if store.shape() != model.config().shape {
        return Err(Error::ShapeMismatch(format!(
            "model expects {:?} images, dataset holds {:?}",
            model.config().shape,
            store.shape()
        )));
    }
    let mut rows = Vec::with_capacity(cfg.snrs.len());
    for (i, &snr) in cfg.snrs.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, Stream::Evaluation, i as u64);
        let (p1, p2) = device_psnrs(model, store, pairs, mode, budget, snr, &mut rng)?;
        rows.push(SweepRow::new(snr, p1, p2));
    }
    Ok(SweepResult { method, rho: model.config().rho, rows })
}

/// NOMA test: both devices superposed on the full `k` channel uses.
pub fn evaluate_noma<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    cfg: &SweepConfig,
    method: Method,
) -> Result<SweepResult> {
    require_variant(model, Variant::Noma)?;
    evaluate_sweep(model, store, pairs, ChannelMode::Superposed, LinkBudget::nominal(cfg.p_avg), cfg, method)
}

/// Ideal-SIC bound: each device alone on the full `k` channel uses.
pub fn evaluate_single_user<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    require_variant(model, Variant::Noma)?;
    evaluate_sweep(
        model,
        store,
        pairs,
        ChannelMode::Orthogonal,
        LinkBudget::nominal(cfg.p_avg),
        cfg,
        Method::SingleUser,
    )
}

/// Time division: each device alone on `k/2` channel uses.
pub fn evaluate_tdma<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    require_variant(model, Variant::PointToPoint)?;
    evaluate_sweep(model, store, pairs, ChannelMode::Orthogonal, cfg.tdma_power.budget(cfg.p_avg), cfg, Method::Tdma)
}

fn require_variant<T: Scalar>(model: &JsccModel<T>, variant: Variant) -> Result<()> {
    if model.config().variant != variant {
        return Err(Error::VariantMismatch(match variant {
            Variant::Noma => "expected a NOMA model",
            Variant::PointToPoint => "expected a point-to-point model",
        }));
    }
    Ok(())
}

/// Early-stopping criterion: mean PSNR over both devices, all validation
/// pairs and a fixed SNR probe set, with fixed noise.
pub fn validation_psnr<T: Scalar>(
    model: &JsccModel<T>,
    store: &ImageStore,
    pairs: &PairDataset,
    mode: ChannelMode,
    p_avg: f64,
    snrs: &[f64],
    seed: u64,
) -> Result<f64> {
    if snrs.is_empty() {
        return Err(Error::InvalidConfig("validation_snrs must not be empty".into()));
    }
    let mut total = 0.0;
    for (i, &snr) in snrs.iter().enumerate() {
        let mut rng = stream_rng(seed, Stream::Validation, i as u64);
        let (p1, p2) = device_psnrs(model, store, pairs, mode, LinkBudget::nominal(p_avg), snr, &mut rng)?;
        total += 0.5 * (p1 + p2);
    }
    Ok(total / snrs.len() as f64)
}

/// `|PSNR_1 − PSNR_2|` at each test SNR.
pub fn fairness_gap(result: &SweepResult) -> Vec<f64> {
    result.rows.iter().map(SweepRow::gap).collect()
}

/// Mean PSNR of predicting the dataset mean image for every image of
/// `pairs`; the reference level of an uninformed decoder.
pub fn mean_image_psnr(store: &ImageStore, pairs: &PairDataset) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset("evaluation pairs"));
    }
    let mean = store.mean_image();
    let mut total = 0.0;
    for &(a, b) in &pairs.pairs {
        total += capped_psnr(&store.normalized::<f64>(a), &mean)?;
        total += capped_psnr(&store.normalized::<f64>(b), &mean)?;
    }
    Ok(total / (2 * pairs.len()) as f64)
}

/// Rate pair in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub r1: f64,
    pub r2: f64,
}

/// Single-user and sum capacities of a two-user Gaussian MAC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacCapacity {
    pub c1: f64,
    pub c2: f64,
    pub sum: f64,
}

impl MacCapacity {
    pub fn new(p1: f64, p2: f64, noise_variance: f64) -> Result<Self> {
        for (name, v) in [("p1", p1), ("p2", p2), ("noise_variance", noise_variance)] {
            if !(v > 0.0) {
                return Err(Error::InvalidRegion(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self {
            c1: libm::log2(1.0 + p1 / noise_variance),
            c2: libm::log2(1.0 + p2 / noise_variance),
            sum: libm::log2(1.0 + (p1 + p2) / noise_variance),
        })
    }

    /// Successive-decoding corners: user 2 decoded first, then user 1.
    pub fn corners(&self) -> [RatePoint; 2] {
        [RatePoint { r1: self.c1, r2: self.sum - self.c1 }, RatePoint { r1: self.sum - self.c2, r2: self.c2 }]
    }

    pub fn contains(&self, p: RatePoint, tol: f64) -> bool {
        p.r1 >= -tol && p.r2 >= -tol && p.r1 <= self.c1 + tol && p.r2 <= self.c2 + tol && p.r1 + p.r2 <= self.sum + tol
    }
}

/// Boundary of the capacity pentagon from `(0, C2)` to `(C1, 0)`, with
/// `grid ≥ 2` points on the sum-rate face.
pub fn mac_capacity_region(p1: f64, p2: f64, noise_variance: f64, grid: usize) -> Result<Vec<RatePoint>> {
    if grid < 2 {
        return Err(Error::InvalidRegion(format!("grid must have at least 2 points, got {grid}")));
    }
    let cap = MacCapacity::new(p1, p2, noise_variance)?;
    let [lower, upper] = cap.corners();
    let mut points = Vec::with_capacity(grid + 2);
    points.push(RatePoint { r1: 0.0, r2: cap.c2 });
    for i in 0..grid {
        let a = i as f64 / (grid - 1) as f64;
        let r1 = upper.r1 + a * (lower.r1 - upper.r1);
        points.push(RatePoint { r1, r2: cap.sum - r1 });
    }
    points.push(RatePoint { r1: cap.c1, r2: 0.0 });
    Ok(points)
}

/// `(α·C1, (1 − α)·C2)` for each time share `α ∈ [0, 1]`.
pub fn tdma_rates(p1: f64, p2: f64, noise_variance: f64, alphas: &[f64]) -> Result<Vec<RatePoint>> {
    let cap = MacCapacity::new(p1, p2, noise_variance)?;
    alphas
        .iter()
        .map(|&a| {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidRegion(format!("time share must lie in [0, 1], got {a}")));
            }
            Ok(RatePoint { r1: a * cap.c1, r2: (1.0 - a) * cap.c2 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_test_pairs, synthetic_images};
    use crate::model::{ImageShape, ModelConfig};
    use proptest::prelude::*;

    #[test]
    fn psnr_examples() {
        assert_eq!(psnr(&[0.0f64; 4], &[255.0; 4], 255.0).unwrap(), 0.0);
        let p = psnr(&[0.0f64], &[25.5], 255.0).unwrap();
        assert!((p - 20.0).abs() < 1e-12, "{p}");
        assert_eq!(psnr(&[0.3f64, 0.7], &[0.3, 0.7], 1.0).unwrap(), f64::INFINITY);
        assert_eq!(capped_psnr(&[0.3f64], &[0.3]).unwrap(), PSNR_CAP_DB);
        assert!(psnr(&[0.0f64], &[0.0, 1.0], 1.0).is_err());
        assert!(psnr(&[0.0f64], &[1.0], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn psnr_is_scale_invariant(v in proptest::collection::vec((0u8..=255, 0u8..=255), 1..64)) {
            prop_assume!(v.iter().any(|(a, b)| a != b));
            let x255: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y255: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let x1: Vec<f64> = x255.iter().map(|p| p / 255.0).collect();
            let y1: Vec<f64> = y255.iter().map(|p| p / 255.0).collect();
            let a = psnr(&x255, &y255, 255.0).unwrap();
            let b = psnr(&x1, &y1, 1.0).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_row_average_is_device_mean() {
        let r = SweepRow::new(5.0, 21.3, 22.1);
        assert!((r.psnr_avg - 21.7).abs() < 1e-12);
        assert!((r.gap() - 0.8).abs() < 1e-12);
        let swapped = SweepRow::new(5.0, 22.1, 21.3);
        assert_eq!(r.gap(), swapped.gap());
        let res = SweepResult { method: Method::Noma, rho: Rho::new(1, 3).unwrap(), rows: alloc::vec![SweepRow::new(0.0, 9.0, 9.0)] };
        assert_eq!(fairness_gap(&res), alloc::vec![0.0]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        assert_eq!(Method::parse("fdma"), None);
    }

    #[test]
    fn capacity_examples() {
        let cap = MacCapacity::new(1.0, 1.0, 1.0).unwrap();
        assert!((cap.sum - 1.584962500721156).abs() < 1e-9);
        let [c, _] = cap.corners();
        assert!((c.r1 - 1.0).abs() < 1e-9);
        assert!((c.r2 - 0.584962500721156).abs() < 1e-9);
        assert!(MacCapacity::new(0.0, 1.0, 1.0).is_err());
        assert!(MacCapacity::new(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn region_boundary_and_tdma_points() {
        let region = mac_capacity_region(2.0, 1.0, 0.5, 5).unwrap();
        let cap = MacCapacity::new(2.0, 1.0, 0.5).unwrap();
        assert_eq!(region.len(), 7);
        assert_eq!(region[0], RatePoint { r1: 0.0, r2: cap.c2 });
        assert_eq!(*region.last().unwrap(), RatePoint { r1: cap.c1, r2: 0.0 });
        for p in &region[1..6] {
            assert!((p.r1 + p.r2 - cap.sum).abs() < 1e-12);
            assert!(cap.contains(*p, 1e-12));
        }
        let alphas: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        for p in tdma_rates(2.0, 1.0, 0.5, &alphas).unwrap() {
            assert!(cap.contains(p, 1e-12));
        }
        assert!(tdma_rates(1.0, 1.0, 1.0, &[1.5]).is_err());
        assert!(mac_capacity_region(1.0, 1.0, 1.0, 1).is_err());
    }

    fn untrained_setup(variant: Variant) -> (JsccModel<f32>, ImageStore, PairDataset) {
        let shape = ImageShape::new(3, 16, 16);
        let store = synthetic_images(32, shape, 7).unwrap();
        let cfg = ModelConfig::build(shape, Rho::new(1, 3).unwrap(), 8, variant).unwrap();
        let model = JsccModel::new(cfg, &mut stream_rng(4, Stream::Init, 0)).unwrap();
        let idx: Vec<usize> = (0..32).collect();
        (model, store, make_test_pairs(&idx).unwrap())
    }

    #[test]
    fn untrained_model_is_near_the_mean_image_level() {
        let (model, store, pairs) = untrained_setup(Variant::Noma);
        let oracle = mean_image_psnr(&store, &pairs).unwrap();
        let cfg = SweepConfig::new(alloc::vec![0.0, 10.0, 20.0], 0.5, 1);
        let res = evaluate_noma(&model, &store, &pairs, &cfg, Method::Noma).unwrap();
        assert_eq!(res.rows.len(), 3);
        for r in &res.rows {
            assert!((r.psnr_avg - oracle).abs() <= 3.0, "{} vs oracle {oracle}", r.psnr_avg);
            assert!((r.psnr_avg - 0.5 * (r.psnr_dev1 + r.psnr_dev2)).abs() < 1e-9);
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_side_effect_free() {
        let (model, store, pairs) = untrained_setup(Variant::Noma);
        let before = model.params().to_vec();
        let cfg = SweepConfig::new(alloc::vec![0.0, 20.0], 0.5, 9);
        let a = evaluate_single_user(&model, &store, &pairs, &cfg).unwrap();
        let b = evaluate_single_user(&model, &store, &pairs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(model.params(), &before[..]);
        assert!(evaluate_tdma(&model, &store, &pairs, &cfg).is_err());
    }

    #[test]
    fn tdma_device_order_does_not_matter() {
        let (model, store, pairs) = untrained_setup(Variant::PointToPoint);
        let swapped = PairDataset { pairs: pairs.pairs.iter().map(|&(a, b)| (b, a)).collect(), split: pairs.split };
        let cfg = SweepConfig::new(alloc::vec![10.0], 0.5, 2);
        let a = evaluate_tdma(&model, &store, &pairs, &cfg).unwrap();
        let b = evaluate_tdma(&model, &store, &swapped, &cfg).unwrap();
        assert!((a.rows[0].psnr_avg - b.rows[0].psnr_avg).abs() < 0.05);
        assert!(evaluate_noma(&model, &store, &pairs, &cfg, Method::Noma).is_err());
    }

    #[test]
    fn sweep_config_rejects_unsorted_snrs() {
        assert!(SweepConfig::new(alloc::vec![5.0, 0.0], 0.5, 0).validate().is_err());
        assert!(SweepConfig::new(alloc::vec![], 0.5, 0).validate().is_err());
    }
}
