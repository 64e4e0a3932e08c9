//! Experiment configuration: a flat TOML key/value file, overridden by
//! command-line flags, resolved against defaults and the desk-scale
//! profile into a fully materialized [`ExperimentConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use jscc_core::evaluation::{Method, SweepConfig, TdmaPower};
use jscc_core::model::Rho;
use jscc_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{RunError, RunResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "JSCC_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// Training pairs per training image when `pairs` is not given.
pub const PAIRS_PER_IMAGE: f64 = 4.4;

/// Every key is optional; unset keys take the profile default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub method: Option<String>,
    pub rho: Option<String>,
    pub p_avg: Option<f64>,
    pub snr_train: Option<[f64; 2]>,
    pub snr_test: Option<Vec<f64>>,
    pub snr_val: Option<Vec<f64>>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub patience: Option<usize>,
    pub max_epochs: Option<usize>,
    pub pairs: Option<usize>,
    pub seed: Option<u64>,
    pub eval_seed: Option<u64>,
    pub dataset: Option<String>,
    pub val_count: Option<usize>,
    pub test_count: Option<usize>,
    pub filters: Option<usize>,
    pub output: Option<PathBuf>,
    pub desk_scale: Option<bool>,
    pub carry_optimizer: Option<bool>,
    pub tdma_energy_equalized: Option<bool>,
    pub snr_conditioning: Option<bool>,
    pub plots: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> RunResult<Self> {
        let text = fs::read_to_string(path).map_err(RunError::io(path))?;
        Self::parse(&text).map_err(|message| RunError::ConfigFile { path: path.to_path_buf(), message })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    /// Values set in `over` replace those in `self`.
    pub fn merge(self, over: ConfigFile) -> ConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { ConfigFile { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            method, rho, p_avg, snr_train, snr_test, snr_val, batch_size, learning_rate, patience, max_epochs, pairs,
            seed, eval_seed, dataset, val_count, test_count, filters, output, desk_scale, carry_optimizer,
            tdma_energy_equalized, snr_conditioning, plots
        )
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub rho: Rho,
    pub p_avg: f64,
    pub snr_train: (f64, f64),
    pub snr_test: Vec<f64>,
    pub snr_val: Vec<f64>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: Option<usize>,
    /// Training pairs `t`; `None` until the dataset size is known, then
    /// `PAIRS_PER_IMAGE` per training image.
    pub pairs: Option<usize>,
    pub seed: u64,
    pub eval_seed: u64,
    pub dataset: String,
    pub val_count: usize,
    pub test_count: Option<usize>,
    pub filters: usize,
    pub output: PathBuf,
    pub desk_scale: bool,
    pub carry_optimizer: bool,
    pub tdma_energy_equalized: bool,
    pub snr_conditioning: bool,
    pub plots: bool,
}

/// Full-scale defaults.
pub mod defaults {
    pub const METHOD: &str = "noma-cl";
    pub const RHO: &str = "1/3";
    pub const P_AVG: f64 = 0.5;
    pub const SNR_TRAIN: [f64; 2] = [0.0, 20.0];
    pub const SNR_GRID: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
    pub const BATCH_SIZE: usize = 64;
    pub const LEARNING_RATE: f64 = 1e-4;
    pub const PATIENCE: usize = 10;
    pub const PAIRS: usize = 200_000;
    pub const DATASET: &str = "cifar10:data/cifar-10-batches-bin";
    pub const VAL_COUNT: usize = 5000;
    pub const FILTERS: usize = 256;
}

/// Overrides applied by `desk_scale = true` to keys left unset.
pub mod desk {
    pub const FILTERS: usize = 64;
    pub const PATIENCE: usize = 5;
    pub const DATASET: &str = "synthetic:719:3x16x16";
    pub const VAL_COUNT: usize = 64;
    pub const TEST_COUNT: usize = 200;
    pub const BATCH_SIZE: usize = 32;
    pub const LEARNING_RATE: f64 = 1e-3;
    pub const MAX_EPOCHS: usize = 12;
}

impl ExperimentConfig {
    /// Applies defaults (and the desk profile when requested) and checks
    /// every field. `output_root` is used when `output` is unset.
    pub fn resolve(file: ConfigFile, output_root: Option<PathBuf>) -> RunResult<Self> {
        let desk_scale = file.desk_scale.unwrap_or(false);
        fn profile<V>(desk_scale: bool, full: V, reduced: V) -> V {
            if desk_scale {
                reduced
            } else {
                full
            }
        }
        let method_name = file.method.unwrap_or_else(|| defaults::METHOD.into());
        let method = Method::parse(&method_name).ok_or_else(|| {
            RunError::config("method", format!("unknown method {method_name:?}; expected noma, noma-cl, tdma or single-user"))
        })?;
        let rho_text = file.rho.unwrap_or_else(|| defaults::RHO.into());
        let rho = rho_text.parse::<Rho>().map_err(|e| RunError::config("rho", e.to_string()))?;
        let [lo, hi] = file.snr_train.unwrap_or(defaults::SNR_TRAIN);
        let pairs = match file.pairs {
            Some(t) => Some(t),
            None if desk_scale => None,
            None => Some(defaults::PAIRS),
        };
        let test_count = file.test_count.or(desk_scale.then_some(desk::TEST_COUNT));
        let seed = file.seed.unwrap_or(0);
        let output = file
            .output
            .or(output_root)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
        let cfg = ExperimentConfig {
            method,
            rho,
            p_avg: file.p_avg.unwrap_or(defaults::P_AVG),
            snr_train: (lo, hi),
            snr_test: file.snr_test.unwrap_or_else(|| defaults::SNR_GRID.to_vec()),
            snr_val: file.snr_val.unwrap_or_else(|| defaults::SNR_GRID.to_vec()),
            batch_size: file.batch_size.unwrap_or(profile(desk_scale, defaults::BATCH_SIZE, desk::BATCH_SIZE)),
            learning_rate: file.learning_rate.unwrap_or(profile(desk_scale, defaults::LEARNING_RATE, desk::LEARNING_RATE)),
            patience: file.patience.unwrap_or(profile(desk_scale, defaults::PATIENCE, desk::PATIENCE)),
            max_epochs: file.max_epochs.or(desk_scale.then_some(desk::MAX_EPOCHS)),
            pairs,
            seed,
            eval_seed: file.eval_seed.unwrap_or(seed),
            dataset: file.dataset.unwrap_or_else(|| profile(desk_scale, defaults::DATASET, desk::DATASET).into()),
            val_count: file.val_count.unwrap_or(profile(desk_scale, defaults::VAL_COUNT, desk::VAL_COUNT)),
            test_count,
            filters: file.filters.unwrap_or(profile(desk_scale, defaults::FILTERS, desk::FILTERS)),
            output,
            desk_scale,
            carry_optimizer: file.carry_optimizer.unwrap_or(false),
            tdma_energy_equalized: file.tdma_energy_equalized.unwrap_or(false),
            snr_conditioning: file.snr_conditioning.unwrap_or(true),
            plots: file.plots.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> RunResult<()> {
        let positive = |field, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RunError::config(field, format!("must be positive, got {v}")))
            }
        };
        positive("p_avg", self.p_avg)?;
        positive("learning_rate", self.learning_rate)?;
        let (lo, hi) = self.snr_train;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(RunError::config("snr_train", format!("low {lo} must not exceed high {hi}")));
        }
        for (field, list) in [("snr_test", &self.snr_test), ("snr_val", &self.snr_val)] {
            if list.is_empty() {
                return Err(RunError::config(field, "must list at least one SNR"));
            }
            if list.iter().any(|v| !v.is_finite()) || list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(RunError::config(field, "SNRs must be finite and strictly increasing"));
            }
        }
        let nonzero = |field, v: usize| {
            if v == 0 {
                Err(RunError::config(field, "must be positive"))
            } else {
                Ok(())
            }
        };
        nonzero("batch_size", self.batch_size)?;
        nonzero("patience", self.patience)?;
        nonzero("filters", self.filters)?;
        nonzero("val_count", self.val_count)?;
        if let Some(t) = self.pairs {
            nonzero("pairs", t)?;
        }
        if let Some(e) = self.max_epochs {
            nonzero("max_epochs", e)?;
        }
        if let Some(n) = self.test_count {
            nonzero("test_count", n)?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            patience: self.patience,
            snr_range: self.snr_train,
            p_avg: self.p_avg,
            seed: self.seed,
            max_epochs: self.max_epochs,
            validation_snrs: self.snr_val.clone(),
            carry_optimizer: self.carry_optimizer,
        }
    }

    pub fn sweep_config(&self, tdma_power: TdmaPower) -> SweepConfig {
        SweepConfig { snrs: self.snr_test.clone(), p_avg: self.p_avg, seed: self.eval_seed, tdma_power }
    }

    /// Every key set explicitly; resolving it again yields `self`.
    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            method: Some(self.method.name().into()),
            rho: Some(self.rho.to_string()),
            p_avg: Some(self.p_avg),
            snr_train: Some([self.snr_train.0, self.snr_train.1]),
            snr_test: Some(self.snr_test.clone()),
            snr_val: Some(self.snr_val.clone()),
            batch_size: Some(self.batch_size),
            learning_rate: Some(self.learning_rate),
            patience: Some(self.patience),
            max_epochs: self.max_epochs,
            pairs: self.pairs,
            seed: Some(self.seed),
            eval_seed: Some(self.eval_seed),
            dataset: Some(self.dataset.clone()),
            val_count: Some(self.val_count),
            test_count: self.test_count,
            filters: Some(self.filters),
            output: Some(self.output.clone()),
            desk_scale: Some(self.desk_scale),
            carry_optimizer: Some(self.carry_optimizer),
            tdma_energy_equalized: Some(self.tdma_energy_equalized),
            snr_conditioning: Some(self.snr_conditioning),
            plots: Some(self.plots),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_file()).expect("config values are always representable in TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_full_scale_setup() {
        let cfg = ExperimentConfig::resolve(ConfigFile::default(), None).unwrap();
        assert_eq!(cfg.method, Method::NomaCl);
        assert_eq!(cfg.rho, Rho::new(1, 3).unwrap());
        assert_eq!(cfg.learning_rate, 1e-4);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.patience, 10);
        assert_eq!(cfg.filters, 256);
        assert_eq!(cfg.p_avg, 0.5);
        assert_eq!(cfg.pairs, Some(200_000));
        assert_eq!(cfg.snr_train, (0.0, 20.0));
        assert_eq!(cfg.output, PathBuf::from(DEFAULT_OUTPUT_ROOT));
    }

    #[test]
    fn desk_profile_only_fills_unset_keys() {
        let file = ConfigFile { desk_scale: Some(true), patience: Some(3), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file, Some("/tmp/out".into())).unwrap();
        assert_eq!(cfg.filters, 64);
        assert_eq!(cfg.patience, 3);
        assert_eq!(cfg.pairs, None);
        assert_eq!(cfg.max_epochs, Some(desk::MAX_EPOCHS));
        assert_eq!(cfg.dataset, desk::DATASET);
        assert_eq!(cfg.output, PathBuf::from("/tmp/out"));
    }

    #[test]
    fn file_values_lose_to_overrides() {
        let file = ConfigFile::parse("method = \"tdma\"\nseed = 4\nfilters = 32\n").unwrap();
        let flags = ConfigFile { seed: Some(9), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file.merge(flags), None).unwrap();
        assert_eq!(cfg.method, Method::Tdma);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.eval_seed, 9);
        assert_eq!(cfg.filters, 32);
    }

    #[test]
    fn echoed_config_resolves_to_itself() {
        let file = ConfigFile { desk_scale: Some(true), max_epochs: Some(3), seed: Some(2), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file, None).unwrap();
        let echoed = ConfigFile::parse(&cfg.to_toml()).unwrap();
        assert_eq!(ExperimentConfig::resolve(echoed, None).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_offending_field() {
        let cases = [
            ("method = \"fdma\"", "method"),
            ("rho = \"1/0\"", "rho"),
            ("p_avg = -1.0", "p_avg"),
            ("snr_train = [20.0, 0.0]", "snr_train"),
            ("snr_test = [5.0, 0.0]", "snr_test"),
            ("batch_size = 0", "batch_size"),
            ("patience = 0", "patience"),
        ];
        for (text, field) in cases {
            let err = ExperimentConfig::resolve(ConfigFile::parse(text).unwrap(), None).unwrap_err();
            assert!(matches!(&err, RunError::Config { field: f, .. } if *f == field), "{text}: {err}");
            assert_eq!(err.exit_code(), 1);
        }
        assert!(ConfigFile::parse("unknown_key = 1").is_err());
        assert!(ConfigFile::parse("seed = \"x\"").is_err());
    }
}
