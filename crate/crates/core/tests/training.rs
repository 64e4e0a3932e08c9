use jscc_core::data::{make_validation_pairs, subsample_pairs, synthetic_images, ImageStore, PairDataset};
use jscc_core::model::{Device, ImageShape, JsccModel, ModelConfig, Rho, Variant};
use jscc_core::pipeline::{ChannelMode, LinkBudget, PairBatch};
use jscc_core::rng::{stream_rng, Stream};
use jscc_core::training::{
    assemble_batch, batch_gradient, draw_snrs, train, train_curriculum, train_step, Adam, TrainConfig, TrainData,
};

fn batch_of<T: jscc_core::Scalar>(store: &ImageStore, pairs: &[(usize, usize)], snrs: &[f64]) -> PairBatch<T> {
    assemble_batch(store, pairs, snrs.to_vec())
}

fn tiny_model<T: jscc_core::Scalar>(seed: u64) -> JsccModel<T> {
    let cfg = ModelConfig::noma(ImageShape::new(1, 8, 8), Rho::new(1, 4).unwrap(), 4).unwrap();
    JsccModel::new(cfg, &mut stream_rng(seed, Stream::Init, 0)).unwrap()
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let store = synthetic_images(6, ImageShape::new(1, 8, 8), 21).unwrap();
    let mut model = tiny_model::<f64>(5);
    let batch = batch_of::<f64>(&store, &[(0, 1), (2, 3), (4, 5)], &[3.0, 11.0, 17.0]);
    let budget = LinkBudget::nominal(0.5);
    let loss_at = |m: &JsccModel<f64>| {
        batch_gradient(m, &batch, ChannelMode::Superposed, budget, &mut stream_rng(1, Stream::Noise, 0)).unwrap()
    };
    let (_, grad) = loss_at(&model);

    let mut picks: Vec<usize> = Vec::new();
    for d in Device::BOTH {
        let r = model.embedding_range(d).unwrap();
        picks.extend((0..6).map(|i| r.start + i * 7));
    }
    let total = model.count_parameters();
    let mut rng = stream_rng(3, Stream::Init, 99);
    while picks.len() < 40 {
        let i = rand::Rng::random_range(&mut rng, 0..total);
        if !picks.contains(&i) {
            picks.push(i);
        }
    }

    let h = 1e-6;
    let mut worst = 0.0f64;
    for &i in &picks {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = loss_at(&model).0;
        model.params_mut()[i] = orig - h;
        let down = loss_at(&model).0;
        model.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (grad[i] - fd).abs() / (grad[i].abs() + fd.abs()).max(1e-7);
        worst = worst.max(rel);
        assert!(rel < 1e-3, "param {i}: analytic {} vs numeric {fd} (rel {rel})", grad[i]);
    }
    assert!(worst < 1e-3);
}

#[test]
fn both_device_embeddings_receive_gradient() {
    let store = synthetic_images(4, ImageShape::new(1, 8, 8), 2).unwrap();
    let model = tiny_model::<f32>(8);
    let batch = batch_of::<f32>(&store, &[(0, 1), (2, 3)], &[10.0, 10.0]);
    let (_, grad) = batch_gradient(&model, &batch, ChannelMode::Superposed, LinkBudget::nominal(0.5), &mut stream_rng(0, Stream::Noise, 0)).unwrap();
    for d in Device::BOTH {
        let r = model.embedding_range(d).unwrap();
        assert!(grad[r].iter().any(|g| *g != 0.0), "{d:?}");
    }
}

#[test]
fn repeated_steps_reduce_loss_on_one_batch() {
    let store = synthetic_images(8, ImageShape::new(1, 8, 8), 4).unwrap();
    let mut model = tiny_model::<f32>(2);
    let batch = batch_of::<f32>(&store, &[(0, 1), (2, 3), (4, 5), (6, 7)], &[10.0; 4]);
    let budget = LinkBudget::nominal(0.5);
    let mut adam = Adam::new(model.count_parameters(), 1e-3);
    let loss = |m: &JsccModel<f32>| {
        batch_gradient(m, &batch, ChannelMode::Superposed, budget, &mut stream_rng(0, Stream::Noise, 7)).unwrap().0
    };
    let start = loss(&model);
    for _ in 0..20 {
        train_step(&mut model, &mut adam, &batch, ChannelMode::Superposed, budget, &mut stream_rng(0, Stream::Noise, 7)).unwrap();
    }
    let end = loss(&model);
    assert!(end < start, "loss {start} -> {end}");
}

#[test]
fn embeddings_move_during_training() {
    let store = synthetic_images(8, ImageShape::new(1, 8, 8), 4).unwrap();
    let mut model = tiny_model::<f32>(2);
    let before: Vec<Vec<f32>> = Device::BOTH.iter().map(|d| model.embedding(*d).unwrap().data).collect();
    let budget = LinkBudget::nominal(0.5);
    let mut adam = Adam::new(model.count_parameters(), 1e-3);
    let mut noise = stream_rng(0, Stream::Noise, 0);
    let mut snr = stream_rng(0, Stream::Snr, 0);
    for _ in 0..100 {
        let b = batch_of::<f32>(&store, &[(0, 1), (2, 3), (4, 5), (6, 7)], &draw_snrs(4, (0.0, 20.0), &mut snr));
        train_step(&mut model, &mut adam, &b, ChannelMode::Superposed, budget, &mut noise).unwrap();
    }
    for (d, old) in Device::BOTH.iter().zip(&before) {
        let new = model.embedding(*d).unwrap().data;
        let shift: f32 = new.iter().zip(old).map(|(a, b)| (a - b).abs()).sum();
        assert!(shift > 0.0, "{d:?} embedding did not change");
    }
}

#[test]
fn drawn_snrs_are_uniform() {
    let mut rng = stream_rng(17, Stream::Snr, 0);
    let mut s = draw_snrs(10_000, (0.0, 20.0), &mut rng);
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let ks = s
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = v / 20.0;
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0f64, f64::max);
    // One-sample KS critical value at the 1% level.
    assert!(ks < 1.628 / n.sqrt(), "KS statistic {ks}");
}

fn small_data() -> (ImageStore, PairDataset, PairDataset) {
    let store = synthetic_images(40, ImageShape::new(1, 8, 8), 12).unwrap();
    let train = subsample_pairs(32, 64, false, &mut stream_rng(12, Stream::Pairs, 0)).unwrap();
    let val_idx: Vec<usize> = (32..40).collect();
    (store, train, make_validation_pairs(&val_idx).unwrap())
}

fn quick_config() -> TrainConfig {
    TrainConfig { learning_rate: 2e-3, batch_size: 16, patience: 2, max_epochs: Some(6), seed: 12, ..TrainConfig::default() }
}

#[test]
fn early_stop_leaves_exactly_patience_trailing_epochs() {
    let (store, train_pairs, val) = small_data();
    let mut model = tiny_model::<f32>(1);
    let cfg = TrainConfig { max_epochs: None, patience: 2, learning_rate: 5e-2, ..quick_config() };
    let data = TrainData { store: &store, train: &train_pairs, val: &val };
    let out = train(&mut model, data, &cfg, ChannelMode::Superposed, &mut |_, _, _| true).unwrap();
    assert!(out.stopped_early);
    assert!(out.history.len() >= cfg.patience);
    let trailing = out.history.iter().rev().take_while(|r| r.val_psnr <= out.best_val_psnr && r.epoch > out.best_epoch).count();
    assert_eq!(trailing, cfg.patience);
    assert_eq!(out.history.len(), out.best_epoch + cfg.patience);
    let max = out.history.iter().map(|r| r.val_psnr).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_val_psnr, max);
}

#[test]
fn identical_seeds_give_identical_histories() {
    let (store, train_pairs, val) = small_data();
    let data = TrainData { store: &store, train: &train_pairs, val: &val };
    let run = || {
        let mut model = tiny_model::<f32>(3);
        train(&mut model, data, &quick_config(), ChannelMode::Superposed, &mut |_, _, _| true).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.history, b.history);
    assert_eq!(a.best_params, b.best_params);
    let other = {
        let mut model = tiny_model::<f32>(3);
        let cfg = TrainConfig { seed: 13, ..quick_config() };
        train(&mut model, data, &cfg, ChannelMode::Superposed, &mut |_, _, _| true).unwrap()
    };
    assert_ne!(a.history, other.history);
}

#[test]
fn curriculum_hands_off_the_single_user_model() {
    let (store, train_pairs, val) = small_data();
    let data = TrainData { store: &store, train: &train_pairs, val: &val };
    let mut model = tiny_model::<f32>(4);
    let mut phases = Vec::new();
    let out = train_curriculum(&mut model, data, &quick_config(), &mut |p, _, _, _| {
        phases.push(p);
        true
    })
    .unwrap();
    assert_eq!(phases.len(), out.phase1.history.len() + out.phase2.history.len());
    assert!(out.handoff_val_psnr <= out.phase1.best_val_psnr);
    assert_eq!(model.params(), &out.phase2.best_params[..]);
    assert_ne!(out.phase1.best_params, out.phase2.best_params);
}

#[test]
fn point_to_point_model_trains_on_orthogonal_channels() {
    let (store, train_pairs, val) = small_data();
    let data = TrainData { store: &store, train: &train_pairs, val: &val };
    let cfg = ModelConfig::build(ImageShape::new(1, 8, 8), Rho::new(1, 4).unwrap(), 4, Variant::PointToPoint).unwrap();
    let mut model = JsccModel::<f32>::new(cfg, &mut stream_rng(0, Stream::Init, 0)).unwrap();
    let run = TrainConfig { max_epochs: Some(2), ..quick_config() };
    assert!(train(&mut model, data, &run, ChannelMode::Superposed, &mut |_, _, _| true).is_err());
    let out = train(&mut model, data, &run, ChannelMode::Orthogonal, &mut |_, _, _| true).unwrap();
    assert_eq!(out.history.len(), 2);
}
