//! Stages of an experiment: data preparation, training of each method,
//! evaluation sweeps, the four-method comparison, the parameter report and
//! the capacity-region utility. Every stage writes its artifacts under the
//! configured output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use jscc_core::data::PairDataset;
use jscc_core::evaluation::{
    evaluate_noma, evaluate_single_user, evaluate_tdma, mac_capacity_region, tdma_rates, MacCapacity, Method,
    RatePoint, SweepResult, TdmaPower,
};
use jscc_core::model::{ImageShape, JsccModel, ModelConfig, Variant};
use jscc_core::pipeline::ChannelMode;
use jscc_core::rng::{stream_rng, Stream};
use jscc_core::training::{train, train_curriculum, CurriculumPhase, EpochRecord, TrainData};

use crate::artifacts::{write_atomic, write_history_csv, write_pairs_csv, write_rates_csv, write_summary_csv, write_sweep_csv};
use crate::checkpoint::{self, TrainingMeta};
use crate::config::{ExperimentConfig, PAIRS_PER_IMAGE};
use crate::dataset::{self, DatasetSpec, LoadedData};
use crate::error::{RunError, RunResult};

/// Loaded data and pair lists for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// The input config with `pairs` materialized.
    pub cfg: ExperimentConfig,
    pub data: LoadedData,
    pub train: PairDataset,
    pub val: PairDataset,
    pub test: PairDataset,
}

impl Prepared {
    pub fn shape(&self) -> ImageShape {
        self.data.shape()
    }

    fn train_data(&self) -> TrainData<'_> {
        TrainData { store: &self.data.store, train: &self.train, val: &self.val }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> RunResult<Prepared> {
    let spec = DatasetSpec::parse(&cfg.dataset)?;
    let data = dataset::load(&spec, cfg.val_count, cfg.test_count, cfg.seed)?;
    for variant in [Variant::Noma, Variant::PointToPoint] {
        model_config(cfg, data.shape(), variant)?;
    }
    let t = cfg.pairs.unwrap_or_else(|| (PAIRS_PER_IMAGE * data.train.len() as f64).round() as usize);
    let train = data.train_pairs(t, cfg.seed).map_err(|e| match e {
        RunError::Core(jscc_core::Error::TooManyPairs { requested, available }) => RunError::config(
            "pairs",
            format!("{requested} pairs requested but {} training images allow only {available}", data.train.len()),
        ),
        other => other,
    })?;
    let val = data.val_pairs()?;
    let test = data.test_pairs()?;
    let mut cfg = cfg.clone();
    cfg.pairs = Some(t);
    Ok(Prepared { cfg, data, train, val, test })
}

/// Model configuration of `variant` for `shape`, with errors attributed to
/// the config field responsible.
pub fn model_config(cfg: &ExperimentConfig, shape: ImageShape, variant: Variant) -> RunResult<ModelConfig> {
    if !matches!(shape.channels, 1 | 3) || !shape.height.is_multiple_of(4) || !shape.width.is_multiple_of(4) {
        return Err(RunError::config(
            "dataset",
            format!(
                "images are {}x{}x{}; need 1 or 3 channels and sides divisible by 4",
                shape.channels, shape.height, shape.width
            ),
        ));
    }
    let built = ModelConfig::build(shape, cfg.rho, cfg.filters, variant).map_err(|e| RunError::config("rho", e.to_string()))?;
    Ok(if cfg.snr_conditioning { built } else { built.without_snr_conditioning() })
}

/// Fresh model; NOMA-type methods share one initialization per seed.
pub fn init_model(cfg: &ExperimentConfig, shape: ImageShape, variant: Variant) -> RunResult<JsccModel<f32>> {
    let mc = model_config(cfg, shape, variant)?;
    Ok(JsccModel::new(mc, &mut stream_rng(cfg.seed, Stream::Init, 0))?)
}

pub fn checkpoint_path(out: &Path, method: Method) -> PathBuf {
    out.join(format!("{}.ckpt", method.name()))
}

pub fn history_path(out: &Path, method: Method) -> PathBuf {
    out.join(format!("{}_history.csv", method.name()))
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub method: Method,
    pub model: JsccModel<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_psnr: f64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub models: Vec<TrainedModel>,
    /// Superposed validation PSNR right after curriculum phase 1.
    pub handoff_val_psnr: Option<f64>,
}

impl TrainRun {
    pub fn get(&self, method: Method) -> Option<&TrainedModel> {
        self.models.iter().find(|m| m.method == method)
    }
}

/// Per-epoch persistence: history rewritten every epoch, checkpoint on
/// every improvement, so an interrupted run keeps its last good state.
struct Recorder<'a> {
    out: &'a Path,
    histories: Vec<(Method, Vec<EpochRecord>)>,
    error: Option<RunError>,
    log: &'a mut dyn Write,
}

impl<'a> Recorder<'a> {
    fn new(out: &'a Path, log: &'a mut dyn Write) -> Self {
        Self { out, histories: Vec::new(), error: None, log }
    }

    fn on_epoch(&mut self, method: Method, r: &EpochRecord, model: &JsccModel<f32>, improved: bool) -> bool {
        let _ = writeln!(
            self.log,
            "[{}] epoch {:3}  train_loss {:.6}  val_psnr {:.3} dB{}",
            method.name(),
            r.epoch,
            r.train_loss,
            r.val_psnr,
            if improved { "  *" } else { "" }
        );
        let history = match self.histories.iter_mut().find(|(m, _)| *m == method) {
            Some((_, h)) => h,
            None => {
                self.histories.push((method, Vec::new()));
                &mut self.histories.last_mut().expect("just pushed").1
            }
        };
        history.push(*r);
        let saved = write_history_csv(&history_path(self.out, method), history).and_then(|_| {
            if improved {
                let meta = TrainingMeta { epoch: r.epoch, val_psnr: r.val_psnr, handoff_val_psnr: None };
                checkpoint::save(&checkpoint_path(self.out, method), method, model, meta)
            } else {
                Ok(())
            }
        });
        match saved {
            Ok(()) => true,
            Err(e) => {
                self.error = Some(e);
                false
            }
        }
    }

    fn finish(self) -> RunResult<Vec<(Method, Vec<EpochRecord>)>> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.histories),
        }
    }
}

fn take_history(histories: &mut [(Method, Vec<EpochRecord>)], method: Method) -> Vec<EpochRecord> {
    histories.iter_mut().find(|(m, _)| *m == method).map(|(_, h)| std::mem::take(h)).unwrap_or_default()
}

/// Trains `method`. `noma-cl` also yields the `single-user` model (its
/// first curriculum phase).
pub fn train_method(prep: &Prepared, method: Method, out: &Path, log: &mut dyn Write) -> RunResult<TrainRun> {
    let cfg = &prep.cfg;
    let tc = cfg.train_config();
    let data = prep.train_data();
    let mut model = init_model(cfg, prep.shape(), method.variant())?;
    let _ = writeln!(log, "[{}] {}", method.name(), model.summary());
    let mut rec = Recorder::new(out, log);
    match method {
        Method::Noma | Method::Tdma | Method::SingleUser => {
            let mode = match method {
                Method::Noma => ChannelMode::Superposed,
                _ => ChannelMode::Orthogonal,
            };
            let outcome = train(&mut model, data, &tc, mode, &mut |r, m, i| rec.on_epoch(method, r, m, i));
            let mut histories = rec.finish()?;
            let outcome = outcome?;
            let meta = TrainingMeta { epoch: outcome.best_epoch, val_psnr: outcome.best_val_psnr, handoff_val_psnr: None };
            checkpoint::save(&checkpoint_path(out, method), method, &model, meta)?;
            Ok(TrainRun {
                models: vec![TrainedModel {
                    method,
                    model,
                    history: take_history(&mut histories, method),
                    best_epoch: outcome.best_epoch,
                    best_val_psnr: outcome.best_val_psnr,
                    stopped_early: outcome.stopped_early,
                }],
                handoff_val_psnr: None,
            })
        }
        Method::NomaCl => {
            let outcome = train_curriculum(&mut model, data, &tc, &mut |phase, r, m, i| {
                let tag = match phase {
                    CurriculumPhase::SingleUser => Method::SingleUser,
                    CurriculumPhase::Superposed => Method::NomaCl,
                };
                rec.on_epoch(tag, r, m, i)
            });
            let mut histories = rec.finish()?;
            let outcome = outcome?;
            let (o1, o2, handoff) = (outcome.phase1, outcome.phase2, outcome.handoff_val_psnr);
            let mut single = model.clone();
            single.set_params(o1.best_params.clone())?;
            checkpoint::save(
                &checkpoint_path(out, Method::SingleUser),
                Method::SingleUser,
                &single,
                TrainingMeta { epoch: o1.best_epoch, val_psnr: o1.best_val_psnr, handoff_val_psnr: None },
            )?;
            checkpoint::save(
                &checkpoint_path(out, Method::NomaCl),
                Method::NomaCl,
                &model,
                TrainingMeta { epoch: o2.best_epoch, val_psnr: o2.best_val_psnr, handoff_val_psnr: Some(handoff) },
            )?;
            let _ = writeln!(log, "[noma-cl] superposed validation PSNR at hand-off {handoff:.3} dB");
            Ok(TrainRun {
                models: vec![
                    TrainedModel {
                        method: Method::SingleUser,
                        model: single,
                        history: take_history(&mut histories, Method::SingleUser),
                        best_epoch: o1.best_epoch,
                        best_val_psnr: o1.best_val_psnr,
                        stopped_early: o1.stopped_early,
                    },
                    TrainedModel {
                        method: Method::NomaCl,
                        model,
                        history: take_history(&mut histories, Method::NomaCl),
                        best_epoch: o2.best_epoch,
                        best_val_psnr: o2.best_val_psnr,
                        stopped_early: o2.stopped_early,
                    },
                ],
                handoff_val_psnr: Some(handoff),
            })
        }
    }
}

/// A sweep with the label used for its file name and legend.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSweep {
    pub label: String,
    pub result: SweepResult,
}

/// Test sweep of a trained model under its method's test channel.
pub fn evaluate_method(
    prep: &Prepared,
    method: Method,
    model: &JsccModel<f32>,
    tdma_power: TdmaPower,
) -> RunResult<SweepResult> {
    let sweep = prep.cfg.sweep_config(tdma_power);
    let (store, test) = (&prep.data.store, &prep.test);
    Ok(match method {
        Method::Noma | Method::NomaCl => evaluate_noma(model, store, test, &sweep, method)?,
        Method::SingleUser => evaluate_single_user(model, store, test, &sweep)?,
        Method::Tdma => evaluate_tdma(model, store, test, &sweep)?,
    })
}

/// Sweeps for `method`; TDMA adds the energy-equalized variant when asked.
fn sweeps_for(prep: &Prepared, method: Method, model: &JsccModel<f32>) -> RunResult<Vec<LabeledSweep>> {
    let mut out = vec![LabeledSweep {
        label: method.name().into(),
        result: evaluate_method(prep, method, model, TdmaPower::Nominal)?,
    }];
    if method == Method::Tdma && prep.cfg.tdma_energy_equalized {
        out.push(LabeledSweep {
            label: "tdma-energy-equalized".into(),
            result: evaluate_method(prep, method, model, TdmaPower::EnergyEqualized)?,
        });
    }
    Ok(out)
}

fn write_sweeps(out: &Path, sweeps: &[LabeledSweep], plots: bool) -> RunResult<()> {
    for s in sweeps {
        write_sweep_csv(&out.join(format!("{}.csv", s.label)), &s.result)?;
    }
    if plots {
        emit_plots(out, sweeps)?;
    }
    Ok(())
}

#[cfg(feature = "plots")]
fn emit_plots(out: &Path, sweeps: &[LabeledSweep]) -> RunResult<()> {
    crate::plot::psnr_vs_snr(&out.join("psnr_vs_snr.svg"), sweeps)?;
    crate::plot::fairness(&out.join("fairness.svg"), sweeps)
}

#[cfg(not(feature = "plots"))]
fn emit_plots(_out: &Path, _sweeps: &[LabeledSweep]) -> RunResult<()> {
    Err(RunError::config("plots", "this build has no plotting support"))
}

/// Writes the resolved config and the training pair list.
fn write_run_inputs(prep: &Prepared, out: &Path) -> RunResult<()> {
    write_atomic(&out.join("config.toml"), prep.cfg.to_toml().as_bytes())?;
    write_pairs_csv(&out.join("train_pairs.csv"), &prep.train)
}

/// `train` subcommand: trains the configured method.
pub fn run_train(prep: &Prepared, log: &mut dyn Write) -> RunResult<TrainRun> {
    let out = prep.cfg.output.clone();
    write_run_inputs(prep, &out)?;
    train_method(prep, prep.cfg.method, &out, log)
}

/// `eval` subcommand: sweeps a saved checkpoint over the test SNRs.
pub fn run_eval(prep: &Prepared, ckpt_path: &Path) -> RunResult<Vec<LabeledSweep>> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let mc = ckpt.model.config();
    let mismatch = |message: String| RunError::Mismatch { path: ckpt_path.to_path_buf(), message };
    if mc.rho != prep.cfg.rho {
        return Err(mismatch(format!("checkpoint rho {} vs configured {}", mc.rho, prep.cfg.rho)));
    }
    if mc.shape != prep.shape() {
        let (a, b) = (mc.shape, prep.shape());
        return Err(mismatch(format!(
            "checkpoint images {}x{}x{} vs dataset {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    if mc.variant != ckpt.method.variant() {
        return Err(mismatch(format!("method {} stored with a {} model", ckpt.method.name(), mc.variant.name())));
    }
    let sweeps = sweeps_for(prep, ckpt.method, &ckpt.model)?;
    write_sweeps(&prep.cfg.output, &sweeps, prep.cfg.plots)?;
    Ok(sweeps)
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    /// NOMA, NOMA-CL, TDMA (and its energy-equalized variant), SingleUser.
    pub sweeps: Vec<LabeledSweep>,
    pub handoff_val_psnr: f64,
    pub trained: Vec<TrainedModel>,
}

impl CompareReport {
    pub fn sweep(&self, label: &str) -> Option<&SweepResult> {
        self.sweeps.iter().find(|s| s.label == label).map(|s| &s.result)
    }

    pub fn model(&self, method: Method) -> Option<&TrainedModel> {
        self.trained.iter().find(|t| t.method == method)
    }
}

/// `compare` subcommand: trains and evaluates all four methods on the same
/// data, initialization seed and test noise.
pub fn run_compare(prep: &Prepared, log: &mut dyn Write) -> RunResult<CompareReport> {
    let out = prep.cfg.output.clone();
    write_run_inputs(prep, &out)?;
    let mut trained = Vec::new();
    let mut handoff = f64::NAN;
    for method in [Method::Noma, Method::NomaCl, Method::Tdma] {
        let run = train_method(prep, method, &out, log)?;
        if let Some(h) = run.handoff_val_psnr {
            handoff = h;
        }
        trained.extend(run.models);
    }
    let mut sweeps = Vec::new();
    for method in [Method::Noma, Method::NomaCl, Method::Tdma, Method::SingleUser] {
        let t = trained.iter().find(|t| t.method == method).expect("every method was trained");
        sweeps.extend(sweeps_for(prep, method, &t.model)?);
    }
    write_sweeps(&out, &sweeps, prep.cfg.plots)?;
    let results: Vec<SweepResult> = sweeps.iter().map(|s| s.result.clone()).collect();
    write_summary_csv(&out.join("summary.csv"), &results)?;
    for s in &sweeps {
        let _ = writeln!(log, "[compare] {:22} mean PSNR {:.3} dB", s.label, s.result.mean_psnr());
    }
    Ok(CompareReport { sweeps, handoff_val_psnr: handoff, trained })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamReport {
    pub noma: usize,
    pub tdma: usize,
}

impl ParamReport {
    pub fn ratio(&self) -> f64 {
        self.noma as f64 / self.tdma as f64
    }
}

/// `params` subcommand: trainable parameter counts of both model types.
pub fn param_report(cfg: &ExperimentConfig, shape: ImageShape) -> RunResult<ParamReport> {
    Ok(ParamReport {
        noma: init_model(cfg, shape, Variant::Noma)?.count_parameters(),
        tdma: init_model(cfg, shape, Variant::PointToPoint)?.count_parameters(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub capacity: MacCapacity,
    pub boundary: Vec<RatePoint>,
    pub tdma: Vec<RatePoint>,
}

/// `region` subcommand: capacity pentagon and TDMA line, written as CSV
/// (and SVG when `plots`).
pub fn run_region(p1: f64, p2: f64, noise_variance: f64, grid: usize, out: &Path, plots: bool) -> RunResult<RegionReport> {
    let capacity = MacCapacity::new(p1, p2, noise_variance)?;
    let boundary = mac_capacity_region(p1, p2, noise_variance, grid)?;
    let alphas: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let tdma = tdma_rates(p1, p2, noise_variance, &alphas)?;
    write_rates_csv(&out.join("capacity_region.csv"), &boundary)?;
    write_rates_csv(&out.join("tdma_rates.csv"), &tdma)?;
    if plots {
        emit_region_plot(out, &boundary, &tdma)?;
    }
    Ok(RegionReport { capacity, boundary, tdma })
}

#[cfg(feature = "plots")]
fn emit_region_plot(out: &Path, boundary: &[RatePoint], tdma: &[RatePoint]) -> RunResult<()> {
    crate::plot::capacity_region(&out.join("capacity_region.svg"), boundary, tdma)
}

#[cfg(not(feature = "plots"))]
fn emit_region_plot(_out: &Path, _boundary: &[RatePoint], _tdma: &[RatePoint]) -> RunResult<()> {
    Err(RunError::config("plots", "this build has no plotting support"))
}
