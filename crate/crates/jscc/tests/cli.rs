use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jscc::artifacts::{read_history_csv, read_sweep_rows};
use jscc::checkpoint;
use jscc::config::OUTPUT_ROOT_ENV;
use jscc_core::evaluation::Method;

const TINY: &[&str] = &[
    "--dataset",
    "synthetic:24:3x8x8:5",
    "--val-count",
    "4",
    "--test-count",
    "4",
    "--pairs",
    "24",
    "--filters",
    "8",
    "--batch-size",
    "8",
    "--learning-rate",
    "1e-3",
    "--max-epochs",
    "2",
    "--snr-test",
    "0,10",
    "--snr-val",
    "5",
];

fn jscc(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jscc"));
    cmd.args(args).env_remove(OUTPUT_ROOT_ENV);
    if let Some(root) = root {
        cmd.env(OUTPUT_ROOT_ENV, root);
    }
    cmd.output().expect("binary runs")
}

fn tiny(sub: &str, extra: &[&str], out: &Path) -> Output {
    let mut args = vec![sub];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    args.extend(["--output", out.to_str().unwrap()]);
    jscc(&args, None)
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn assert_ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn curriculum_training_writes_both_phases() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny("train", &["--method", "noma-cl"], dir.path());
    assert_ok(&o);
    for name in ["single-user", "noma-cl"] {
        assert!(dir.path().join(format!("{name}.ckpt")).is_file(), "{name}.ckpt");
        assert!(dir.path().join(format!("{name}.json")).is_file(), "{name}.json");
        let hist = dir.path().join(format!("{name}_history.csv"));
        assert_eq!(first_line(&hist), "epoch,train_loss,val_psnr");
        assert_eq!(read_history_csv(&hist).unwrap().len(), 2);
    }
    let m = checkpoint::load_manifest(&dir.path().join("noma-cl.ckpt")).unwrap();
    assert_eq!(m.method, "noma-cl");
    assert!(m.training.handoff_val_psnr.is_some());
    assert!(dir.path().join("config.toml").is_file());
    assert_eq!(first_line(&dir.path().join("train_pairs.csv")), "device1,device2");
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("# resolved configuration"));
    assert!(stdout.contains("pairs = 24"));
}

#[test]
fn evaluation_writes_one_row_per_test_snr() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&tiny("train", &["--method", "noma"], dir.path()));
    let ckpt = dir.path().join("noma.ckpt");
    let eval_dir = dir.path().join("eval");
    let o = tiny("eval", &["--checkpoint", ckpt.to_str().unwrap(), "--snr-test", "0,5,20"], &eval_dir);
    assert_ok(&o);
    let csv = eval_dir.join("noma.csv");
    assert_eq!(first_line(&csv), "snr,psnr,psnr_dev1,psnr_dev2");
    let rows = read_sweep_rows(&csv).unwrap();
    assert_eq!(rows.iter().map(|r| r.snr_db).collect::<Vec<_>>(), vec![0.0, 5.0, 20.0]);
    for r in &rows {
        assert!((r.psnr_avg - 0.5 * (r.psnr_dev1 + r.psnr_dev2)).abs() < 1e-3);
    }
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_ok(&tiny("train", &["--method", "tdma", "--seed", "7"], &first));
    let cfg = first.join("config.toml");
    let o = jscc(
        &["train", "--config", cfg.to_str().unwrap(), "--output", second.to_str().unwrap()],
        None,
    );
    assert_ok(&o);
    let a = fs::read(first.join("tdma_history.csv")).unwrap();
    let b = fs::read(second.join("tdma_history.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(fs::read(first.join("tdma.ckpt")).unwrap(), fs::read(second.join("tdma.ckpt")).unwrap());
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "--method", "single-user"];
    args.extend_from_slice(TINY);
    assert_ok(&jscc(&args, Some(dir.path())));
    assert!(checkpoint::load(&dir.path().join("single-user.ckpt")).is_ok());
}

#[test]
fn compare_covers_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = tiny("compare", &["--tdma-energy-equalized", "--plots"], dir.path());
    assert_ok(&o);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("method,rho,mean_psnr,max_gap"));
    let methods: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    for m in Method::ALL {
        assert!(methods.contains(&m.name()), "{} missing from {methods:?}", m.name());
        assert!(dir.path().join(format!("{}.csv", m.name())).is_file());
    }
    assert!(dir.path().join("tdma-energy-equalized.csv").is_file());
    assert!(dir.path().join("psnr_vs_snr.svg").is_file());
    assert!(dir.path().join("fairness.svg").is_file());
}

#[test]
fn params_prints_the_ratio() {
    let o = jscc(&["params", "--dataset", "synthetic:10:3x32x32", "--filters", "64"], None);
    assert_ok(&o);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let ratio: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("ratio "))
        .expect("ratio line")
        .trim()
        .parse()
        .unwrap();
    assert!((1.0..=1.05).contains(&ratio), "{ratio}");
}

#[test]
fn region_writes_rate_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = jscc(
        &["region", "--p1", "1", "--p2", "2", "--grid", "5", "--output", dir.path().to_str().unwrap()],
        None,
    );
    assert_ok(&o);
    let text = fs::read_to_string(dir.path().join("capacity_region.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r1,r2");
    assert_eq!(lines.len(), 1 + 5 + 2);
    assert_eq!(first_line(&dir.path().join("tdma_rates.csv")), "r1,r2");
    assert!(String::from_utf8(o.stdout).unwrap().contains("sum 2.000000"));
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad.toml");
    fs::write(&bad_key, "methd = \"noma\"\n").unwrap();
    assert_eq!(jscc(&["params", "--config", bad_key.to_str().unwrap()], None).status.code(), Some(1));
    assert_eq!(jscc(&["params", "--rho", "1/7", "--dataset", "synthetic:4:3x8x8"], None).status.code(), Some(1));
    for (flag, value, field) in [("--batch-size", "0", "batch_size"), ("--pairs", "1000", "pairs")] {
        let o = tiny("train", &[flag, value], dir.path());
        assert_eq!(o.status.code(), Some(1));
        assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("config: {field}:")), "{flag}");
    }
    assert_eq!(jscc(&["train", "--bogus"], None).status.code(), Some(1));

    let missing = dir.path().join("none.ckpt");
    let o = tiny("eval", &["--checkpoint", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let absent_data = tiny("train", &["--dataset", "images:/nonexistent/dir"], dir.path());
    assert_eq!(absent_data.status.code(), Some(2));
}

#[test]
fn mismatched_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&tiny("train", &["--method", "noma"], dir.path()));
    let ckpt = dir.path().join("noma.ckpt");
    let o = tiny("eval", &["--checkpoint", ckpt.to_str().unwrap(), "--rho", "1/6"], &dir.path().join("e"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not match"));
}
