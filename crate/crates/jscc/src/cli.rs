//! Command-line front end. Flags mirror the config-file keys and override
//! them; exit status is 0 on success, 1 for configuration errors and 2 for
//! runtime failures.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::config::{ConfigFile, ExperimentConfig, OUTPUT_ROOT_ENV};
use crate::dataset::DatasetSpec;
use crate::error::{RunError, RunResult};
use crate::experiment;

#[derive(Debug, Parser)]
#[command(name = "jscc", version, args_override_self = true, about = "Distributed deep JSCC over a two-user AWGN multiple-access channel")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the configured method and write checkpoints and histories.
    Train(Common),
    /// Sweep a checkpoint over the test SNRs and write its results CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate NOMA, NOMA-CL, TDMA and SingleUser side by side.
    Compare(Common),
    /// Print parameter counts of the NOMA and TDMA models and their ratio.
    Params(Common),
    /// Write the two-user Gaussian MAC capacity region and TDMA rates.
    Region {
        #[arg(long, default_value_t = 1.0)]
        p1: f64,
        #[arg(long, default_value_t = 1.0)]
        p2: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_variance: f64,
        /// Points on the sum-rate face and on the TDMA line.
        #[arg(long, default_value_t = 41)]
        grid: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        plots: bool,
    },
}

/// Config file plus per-key overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Flat TOML file with experiment keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    /// Bandwidth ratio as `n/d`.
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub p_avg: Option<f64>,
    /// Training SNR interval `low,high` in dB.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub snr_train: Option<Vec<f64>>,
    /// Test SNRs in dB, comma separated.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub snr_test: Option<Vec<f64>>,
    /// Validation probe SNRs in dB, comma separated.
    #[arg(long, value_delimiter = ',', action = ArgAction::Set)]
    pub snr_val: Option<Vec<f64>>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Number of unique training pairs `t`.
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// `synthetic:COUNT:CxHxW[:SEED]`, `cifar10:DIR` or `images:DIR`.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub val_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    /// Filter width of the middle layers.
    #[arg(long)]
    pub filters: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub desk_scale: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub carry_optimizer: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tdma_energy_equalized: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub snr_conditioning: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub plots: Option<bool>,
}

impl Common {
    fn overrides(&self) -> RunResult<ConfigFile> {
        let snr_train = match self.snr_train.as_deref() {
            None => None,
            Some(&[lo, hi]) => Some([lo, hi]),
            Some(_) => return Err(RunError::config("snr_train", "expected two values `low,high`")),
        };
        Ok(ConfigFile {
            method: self.method.clone(),
            rho: self.rho.clone(),
            p_avg: self.p_avg,
            snr_train,
            snr_test: self.snr_test.clone(),
            snr_val: self.snr_val.clone(),
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            patience: self.patience,
            max_epochs: self.max_epochs,
            pairs: self.pairs,
            seed: self.seed,
            eval_seed: self.eval_seed,
            dataset: self.dataset.clone(),
            val_count: self.val_count,
            test_count: self.test_count,
            filters: self.filters,
            output: self.output.clone(),
            desk_scale: self.desk_scale,
            carry_optimizer: self.carry_optimizer,
            tdma_energy_equalized: self.tdma_energy_equalized,
            snr_conditioning: self.snr_conditioning,
            plots: self.plots,
        })
    }

    /// File values, then flags, then defaults.
    pub fn resolve(&self, output_root: Option<PathBuf>) -> RunResult<ExperimentConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        ExperimentConfig::resolve(file.merge(self.overrides()?), output_root)
    }
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn echo(out: &mut dyn Write, cfg: &ExperimentConfig) {
    let _ = writeln!(out, "# resolved configuration");
    let _ = write!(out, "{}", cfg.to_toml());
    let _ = writeln!(out);
}

/// Runs one parsed command, writing results to `out` and progress to `log`.
pub fn execute(cli: Cli, out: &mut dyn Write, log: &mut dyn Write) -> RunResult<()> {
    match cli.command {
        Command::Train(common) => {
            let prep = experiment::prepare(&common.resolve(output_root())?)?;
            echo(out, &prep.cfg);
            let run = experiment::run_train(&prep, log)?;
            for m in &run.models {
                let _ = writeln!(
                    out,
                    "{}: best validation PSNR {:.3} dB at epoch {} ({} epochs)",
                    m.method.name(),
                    m.best_val_psnr,
                    m.best_epoch,
                    m.history.len()
                );
            }
        }
        Command::Eval { checkpoint, common } => {
            let prep = experiment::prepare(&common.resolve(output_root())?)?;
            echo(out, &prep.cfg);
            for s in experiment::run_eval(&prep, &checkpoint)? {
                let _ = writeln!(out, "{}: mean PSNR {:.3} dB", s.label, s.result.mean_psnr());
                for r in &s.result.rows {
                    let _ = writeln!(
                        out,
                        "  snr {:5.1}  psnr {:.4}  dev1 {:.4}  dev2 {:.4}",
                        r.snr_db, r.psnr_avg, r.psnr_dev1, r.psnr_dev2
                    );
                }
            }
        }
        Command::Compare(common) => {
            let prep = experiment::prepare(&common.resolve(output_root())?)?;
            echo(out, &prep.cfg);
            let report = experiment::run_compare(&prep, log)?;
            for s in &report.sweeps {
                let _ = writeln!(out, "{}: mean PSNR {:.3} dB", s.label, s.result.mean_psnr());
            }
        }
        Command::Params(common) => {
            let cfg = common.resolve(output_root())?;
            let shape = DatasetSpec::parse(&cfg.dataset)?.shape()?;
            let report = experiment::param_report(&cfg, shape)?;
            let _ = writeln!(out, "filters {}  rho {}  images {}x{}x{}", cfg.filters, cfg.rho, shape.channels, shape.height, shape.width);
            let _ = writeln!(out, "noma parameters {}", report.noma);
            let _ = writeln!(out, "tdma parameters {}", report.tdma);
            let _ = writeln!(out, "ratio {:.4}", report.ratio());
        }
        Command::Region { p1, p2, noise_variance, grid, output, plots } => {
            let dir = output.or_else(output_root).unwrap_or_else(|| PathBuf::from(crate::config::DEFAULT_OUTPUT_ROOT));
            let report = experiment::run_region(p1, p2, noise_variance, grid, &dir, plots)?;
            let c = report.capacity;
            let [a, b] = c.corners();
            let _ = writeln!(out, "C1 {:.6}  C2 {:.6}  sum {:.6}", c.c1, c.c2, c.sum);
            let _ = writeln!(out, "corners ({:.6}, {:.6}) ({:.6}, {:.6})", a.r1, a.r2, b.r1, b.r2);
            let _ = writeln!(out, "wrote {}", dir.join("capacity_region.csv").display());
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let stderr = io::stderr();
    match execute(cli, &mut stdout.lock(), &mut stderr.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from([
            "jscc", "train", "--method", "tdma", "--snr-train", "2,18", "--snr-test", "0,10,20", "--desk-scale", "--seed", "3",
        ])
        .unwrap();
        let Command::Train(common) = cli.command else { panic!("expected train") };
        let cfg = common.resolve(None).unwrap();
        assert_eq!(cfg.snr_train, (2.0, 18.0));
        assert_eq!(cfg.snr_test, vec![0.0, 10.0, 20.0]);
        assert!(cfg.desk_scale);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.filters, 64);
    }

    #[test]
    fn repeated_flags_keep_the_last_value() {
        let cli = Cli::try_parse_from(["jscc", "params", "--seed", "1", "--seed", "2", "--snr-test", "0,5", "--snr-test", "7"])
            .unwrap();
        let Command::Params(common) = cli.command else { panic!("expected params") };
        assert_eq!(common.seed, Some(2));
        assert_eq!(common.snr_test, Some(vec![7.0]));
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["jscc", "train", "--batch-size", "many"]), 1);
        assert_eq!(run(["jscc", "frobnicate"]), 1);
        assert_eq!(run(["jscc", "train", "--method", "fdma"]), 1);
        assert_eq!(run(["jscc", "params", "--snr-train", "1,2,3"]), 1);
    }
}
