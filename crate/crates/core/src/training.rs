//! Losses, Adam, the epoch loop with early stopping, and the two-phase
//! curriculum (interference-free pre-training, then superposed fine-tuning).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::{ImageStore, PairDataset};
use crate::evaluation::validation_psnr;
use crate::model::JsccModel;
use crate::pipeline::{self, ChannelMode, LinkBudget, PairBatch};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Result, Scalar};

/// `(1/m)‖x − x̂‖²`.
pub fn mse<T: Scalar>(x: &[T], x_hat: &[T]) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: x_hat.len() });
    }
    if x.is_empty() {
        return Err(Error::EmptyDataset("mse of empty tensors"));
    }
    let sq: f64 = x
        .iter()
        .zip(x_hat)
        .map(|(a, b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(sq / x.len() as f64)
}

/// `MSE(x1, x̂1) + MSE(x2, x̂2)`.
pub fn pair_loss<T: Scalar>(x1: &[T], x2: &[T], x1_hat: &[T], x2_hat: &[T]) -> Result<f64> {
    Ok(mse(x1, x1_hat)? + mse(x2, x2_hat)?)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<T>,
    v: Vec<T>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![T::zero(); len], v: vec![T::zero(); len], steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        self.steps += 1;
        let t = self.steps as i32;
        let b1 = T::from_f64_lossy(self.beta1);
        let b2 = T::from_f64_lossy(self.beta2);
        let one = T::one();
        let c1 = T::from_f64_lossy(1.0 - libm::pow(self.beta1, t as f64));
        let c2 = T::from_f64_lossy(1.0 - libm::pow(self.beta2, t as f64));
        let lr = T::from_f64_lossy(self.learning_rate);
        let eps = T::from_f64_lossy(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = b1 * *m + (one - b1) * *g;
            *v = b2 * *v + (one - b2) * *g * *g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping (`e`).
    pub patience: usize,
    /// Training SNRs are drawn uniformly from this interval (dB).
    pub snr_range: (f64, f64),
    pub p_avg: f64,
    pub seed: u64,
    /// Hard cap on epochs per phase; `None` means early stopping only.
    pub max_epochs: Option<usize>,
    /// Fixed SNR probe set for validation PSNR (dB).
    pub validation_snrs: Vec<f64>,
    /// Keep Adam's moments from curriculum phase 1 in phase 2.
    pub carry_optimizer: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 64,
            patience: 10,
            snr_range: (0.0, 20.0),
            p_avg: 0.5,
            seed: 0,
            max_epochs: None,
            validation_snrs: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            carry_optimizer: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range;
        if !(lo <= hi) {
            return Err(Error::InvalidConfig(format!("snr_range low {lo} exceeds high {hi}")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        if !(self.p_avg > 0.0) {
            return Err(Error::InvalidConfig(format!("p_avg must be positive, got {}", self.p_avg)));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.validation_snrs.is_empty() {
            return Err(Error::InvalidConfig("validation_snrs must not be empty".into()));
        }
        if self.max_epochs == Some(0) {
            return Err(Error::InvalidConfig("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean pair loss over the epoch's training pairs.
    pub train_loss: f64,
    pub val_psnr: f64,
}

/// Mutable bookkeeping of one training run.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub epoch: usize,
    /// Training pairs processed so far.
    pub instances: u64,
    pub best_val_psnr: f64,
    pub best_epoch: usize,
    pub epochs_without_improvement: usize,
    pub optimizer: Adam<T>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(params: usize, learning_rate: f64) -> Self {
        Self {
            epoch: 0,
            instances: 0,
            best_val_psnr: f64::NEG_INFINITY,
            best_epoch: 0,
            epochs_without_improvement: 0,
            optimizer: Adam::new(params, learning_rate),
        }
    }

    /// Records a validation result; returns whether it improved on the best.
    pub fn observe(&mut self, val_psnr: f64) -> bool {
        if val_psnr > self.best_val_psnr {
            self.best_val_psnr = val_psnr;
            self.best_epoch = self.epoch;
            self.epochs_without_improvement = 0;
            true
        } else {
            self.epochs_without_improvement += 1;
            false
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub best_params: Vec<T>,
    pub best_epoch: usize,
    pub best_val_psnr: f64,
    pub history: Vec<EpochRecord>,
    /// `true` if the patience criterion ended the run (rather than the cap
    /// or the observer).
    pub stopped_early: bool,
}

/// Images and pair lists used for training.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub store: &'a ImageStore,
    pub train: &'a PairDataset,
    pub val: &'a PairDataset,
}

/// Collects the images of `pairs` into a batch with the given SNRs.
pub fn assemble_batch<T: Scalar>(store: &ImageStore, pairs: &[(usize, usize)], snr_db: Vec<f64>) -> PairBatch<T> {
    PairBatch {
        x1: pairs.iter().map(|&(a, _)| store.normalized(a)).collect(),
        x2: pairs.iter().map(|&(_, b)| store.normalized(b)).collect(),
        snr_db,
    }
}

/// Draws one SNR per pair, uniform on `[lo, hi]`.
pub fn draw_snrs<R: Rng + ?Sized>(count: usize, (lo, hi): (f64, f64), rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect()
}

/// One optimizer update on a batch. Returns the per-pair losses.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    model: &mut JsccModel<T>,
    optimizer: &mut Adam<T>,
    batch: &PairBatch<T>,
    mode: ChannelMode,
    budget: LinkBudget,
    noise_rng: &mut R,
) -> Result<Vec<f64>> {
    let fwd = pipeline::forward(model, batch, mode, budget, noise_rng)?;
    let mut grad = vec![T::zero(); model.count_parameters()];
    let losses = pipeline::backward(model, batch, &fwd, &mut grad);
    drop(fwd);
    optimizer.step(model.params_mut(), &grad);
    Ok(losses)
}

/// Gradient of the mean batch loss without updating anything.
pub fn batch_gradient<T: Scalar, R: Rng + ?Sized>(
    model: &JsccModel<T>,
    batch: &PairBatch<T>,
    mode: ChannelMode,
    budget: LinkBudget,
    noise_rng: &mut R,
) -> Result<(f64, Vec<T>)> {
    let fwd = pipeline::forward(model, batch, mode, budget, noise_rng)?;
    let mut grad = vec![T::zero(); model.count_parameters()];
    let losses = pipeline::backward(model, batch, &fwd, &mut grad);
    Ok((losses.iter().sum::<f64>() / losses.len() as f64, grad))
}

/// Observer invoked after every epoch with the record, the current model
/// and whether validation improved. Returning `false` aborts training.
pub type EpochObserver<'o, T> = dyn FnMut(&EpochRecord, &JsccModel<T>, bool) -> bool + 'o;

/// Runs one training phase to completion.
///
/// Each epoch shuffles the training pairs, draws one SNR per pair, updates
/// once per mini-batch and then measures validation PSNR on the fixed
/// validation pairs. The run stops after `patience` consecutive epochs
/// without improvement; the model is left holding the best parameters.
pub fn train<T: Scalar>(
    model: &mut JsccModel<T>,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    mode: ChannelMode,
    observer: &mut EpochObserver<'_, T>,
) -> Result<TrainOutcome<T>> {
    let state = TrainState::new(model.count_parameters(), cfg.learning_rate);
    train_with_state(model, data, cfg, mode, state, 0, observer).map(|(o, _)| o)
}

/// [`train`] with an explicit initial state; `phase` keys the random
/// streams so curriculum phases draw independent SNRs and noise.
pub fn train_with_state<T: Scalar>(
    model: &mut JsccModel<T>,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    mode: ChannelMode,
    mut state: TrainState<T>,
    phase: u64,
    observer: &mut EpochObserver<'_, T>,
) -> Result<(TrainOutcome<T>, TrainState<T>)> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset("training pairs"));
    }
    if data.val.is_empty() {
        return Err(Error::EmptyDataset("validation pairs"));
    }
    let budget = LinkBudget::nominal(cfg.p_avg);
    let mut history = Vec::new();
    let mut best_params = model.params().to_vec();
    let mut stopped_early = false;
    loop {
        if cfg.max_epochs.is_some_and(|cap| state.epoch >= cap) {
            break;
        }
        state.epoch += 1;
        let key = (phase << 20) | state.epoch as u64;
        let order = data.train.shuffled(&mut stream_rng(cfg.seed, Stream::Shuffle, key));
        let mut snr_rng = stream_rng(cfg.seed, Stream::Snr, key);
        let mut noise_rng = stream_rng(cfg.seed, Stream::Noise, key);
        let mut loss_sum = 0.0;
        for chunk in order.pairs.chunks(cfg.batch_size) {
            let snrs = draw_snrs(chunk.len(), cfg.snr_range, &mut snr_rng);
            let batch = assemble_batch(data.store, chunk, snrs);
            let losses = train_step(model, &mut state.optimizer, &batch, mode, budget, &mut noise_rng)?;
            loss_sum += losses.iter().sum::<f64>();
            state.instances += chunk.len() as u64;
        }
        let val_psnr = validation_psnr(model, data.store, data.val, mode, cfg.p_avg, &cfg.validation_snrs, cfg.seed)?;
        let record = EpochRecord { epoch: state.epoch, train_loss: loss_sum / order.len() as f64, val_psnr };
        let improved = state.observe(val_psnr);
        if improved {
            best_params.copy_from_slice(model.params());
        }
        history.push(record);
        if !observer(&record, model, improved) {
            break;
        }
        if state.epochs_without_improvement >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    model.set_params(best_params.clone())?;
    let outcome = TrainOutcome {
        best_params,
        best_epoch: state.best_epoch,
        best_val_psnr: state.best_val_psnr,
        history,
        stopped_early,
    };
    Ok((outcome, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurriculumPhase {
    /// Interference-free pre-training; its result is the SingleUser baseline.
    SingleUser,
    /// Fine-tuning on superposed signals.
    Superposed,
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome<T> {
    pub phase1: TrainOutcome<T>,
    /// Superposed validation PSNR of the phase-1 model at hand-off.
    pub handoff_val_psnr: f64,
    pub phase2: TrainOutcome<T>,
}

/// Per-epoch callback of [`train_curriculum`], told which phase is running.
pub type CurriculumObserver<'o, T> = dyn FnMut(CurriculumPhase, &EpochRecord, &JsccModel<T>, bool) -> bool + 'o;

/// Two-phase curriculum on a NOMA model. Loss, architecture and early
/// stopping stay identical across phases; only the channel changes.
pub fn train_curriculum<T: Scalar>(
    model: &mut JsccModel<T>,
    data: TrainData<'_>,
    cfg: &TrainConfig,
    observer: &mut CurriculumObserver<'_, T>,
) -> Result<CurriculumOutcome<T>> {
    let state = TrainState::new(model.count_parameters(), cfg.learning_rate);
    let (phase1, state1) = train_with_state(model, data, cfg, ChannelMode::Orthogonal, state, 1, &mut |r, m, i| {
        observer(CurriculumPhase::SingleUser, r, m, i)
    })?;
    let handoff_val_psnr =
        validation_psnr(model, data.store, data.val, ChannelMode::Superposed, cfg.p_avg, &cfg.validation_snrs, cfg.seed)?;
    let mut state2 = TrainState::new(model.count_parameters(), cfg.learning_rate);
    if cfg.carry_optimizer {
        state2.optimizer = state1.optimizer;
    }
    let (phase2, _) = train_with_state(model, data, cfg, ChannelMode::Superposed, state2, 2, &mut |r, m, i| {
        observer(CurriculumPhase::Superposed, r, m, i)
    })?;
    Ok(CurriculumOutcome { phase1, handoff_val_psnr, phase2 })
}
