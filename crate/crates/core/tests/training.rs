use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vitderm_core::data::ImageSet;
use vitderm_core::model::{weights, ViTConfig, ViTModel};
use vitderm_core::tensor::{Activation, Tensor};
use vitderm_core::train::{
    evaluate, train, train_step, Checkpoint, LrPolicy, Optimizer, TrainConfig,
};

/// Two visually separable classes: bright top half vs bright bottom half,
/// with per-pixel noise.
fn synthetic_set(n: usize, seed: u64) -> ImageSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ImageSet::new(8);
    for i in 0..n {
        let label = if i % 2 == 0 { 4 } else { 5 };
        let mut d = Vec::with_capacity(8 * 8 * 3);
        for y in 0..8 {
            for _x in 0..8 {
                let bright = (y < 4) == (label == 4);
                let base = if bright { 0.8 } else { 0.2 };
                for _c in 0..3 {
                    d.push((base + rng.random_range(-0.15..0.15f64)).clamp(0.0, 1.0));
                }
            }
        }
        set.push(
            format!("s{i}"),
            &Tensor::new(vec![8, 8, 3], d).unwrap(),
            label,
        )
        .unwrap();
    }
    set
}

fn overfit_config() -> (ViTConfig, TrainConfig) {
    let mut vc = ViTConfig::tiny();
    vc.dropout_rate = 0.0;
    vc.head_activation = Activation::Relu;
    let tc = TrainConfig {
        learning_rate: 0.05,
        batch_size: 16,
        epochs: 200,
        lr_policy: LrPolicy::None,
        early_stop_patience: 0,
        seed: 7,
        ..TrainConfig::default()
    };
    (vc, tc)
}

#[test]
fn overfit_sixteen_samples() {
    let (vc, tc) = overfit_config();
    let data = synthetic_set(16, 1);
    let model = ViTModel::init(vc, 3).unwrap();
    let out = train(model, &data, &data, &tc, None).unwrap();
    let first_full = out.history.epochs.iter().position(|e| e.train_acc == 1.0);
    eprintln!(
        "first 100% train epoch: {first_full:?}, final {:?}",
        out.history.epochs.last()
    );
    assert!(first_full.is_some());
    assert_eq!(evaluate(&out.model, &data).unwrap().accuracy, 1.0);
}

#[test]
fn fixed_batch_loss_strictly_decreases() {
    let (vc, tc) = overfit_config();
    let data = synthetic_set(16, 1);
    let mut model = ViTModel::init(vc, 3).unwrap();
    let mut opt = Optimizer::new(&tc);
    let idx: Vec<usize> = (0..16).collect();
    let (images, labels) = data.batch(&idx);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let losses: Vec<f64> = (0..5)
        .map(|_| {
            train_step(
                &mut model,
                &mut opt,
                &tc,
                &images,
                &labels,
                tc.learning_rate,
                &mut rng,
            )
            .unwrap()
            .loss
        })
        .collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn zero_lr_step_leaves_params_unchanged() {
    let (vc, tc) = overfit_config();
    let data = synthetic_set(4, 2);
    let mut model = ViTModel::init(vc, 3).unwrap();
    let before = model.clone();
    let mut opt = Optimizer::new(&tc);
    let (images, labels) = data.batch(&[0, 1, 2, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_step(&mut model, &mut opt, &tc, &images, &labels, 0.0, &mut rng).unwrap();
    for ((n, a), (_, b)) in model.params().iter().zip(before.params().iter()) {
        if a.trainable {
            assert_eq!(a, b, "{n}");
        }
    }
}

#[test]
fn l2_decays_head_weights_without_data_gradient() {
    // With every trainable parameter but the penalty frozen out of the
    // data loss, the head dense weights shrink each step.
    let (vc, mut tc) = overfit_config();
    tc.l2_lambda = 0.5;
    tc.momentum = 0.0;
    let data = synthetic_set(4, 2);
    let mut model = ViTModel::init(vc, 3).unwrap();
    let mut opt = Optimizer::new(&tc);
    let (images, labels) = data.batch(&[0, 1, 2, 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let norm = |m: &ViTModel| {
        m.params()
            .values("head.dense1.w")
            .unwrap()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
    };
    let mut last = norm(&model);
    for _ in 0..3 {
        train_step(&mut model, &mut opt, &tc, &images, &labels, 0.05, &mut rng).unwrap();
        let now = norm(&model);
        assert!(now < last);
        last = now;
    }
}

#[test]
fn early_stop_history_length_and_single_epoch() {
    let (vc, mut tc) = overfit_config();
    let data = synthetic_set(8, 4);
    tc.epochs = 1;
    let out = train(
        ViTModel::init(vc.clone(), 3).unwrap(),
        &data,
        &data,
        &tc,
        None,
    )
    .unwrap();
    assert_eq!(out.history.len(), 1);

    // validation labels are swapped, so fitting the training set drives
    // validation loss up after an early best
    tc.epochs = 100;
    tc.early_stop_patience = 5;
    let mut swapped = ImageSet::new(8);
    for i in 0..data.len() {
        swapped
            .push(data.ids()[i].clone(), &data.image(i), 9 - data.labels()[i])
            .unwrap();
    }
    let out = train(ViTModel::init(vc, 3).unwrap(), &data, &swapped, &tc, None).unwrap();
    assert!(out.history.stopped_early);
    let mut best = (f64::INFINITY, 0);
    for e in &out.history.epochs {
        if e.val_loss < best.0 {
            best = (e.val_loss, e.epoch);
        }
    }
    assert_eq!(out.history.len(), best.1 + 5);
}

#[test]
fn checkpoint_saves_on_strict_improvement() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.vitw");
    let model = ViTModel::init(ViTConfig::tiny(), 0).unwrap();
    let mut ck = Checkpoint::new(Some(&path));
    let saved: Vec<bool> = [0.5, 0.6, 0.55, 0.7]
        .iter()
        .enumerate()
        .map(|(e, &a)| ck.update(a, e + 1, &model).unwrap())
        .collect();
    assert_eq!(saved, vec![true, true, false, true]);
    assert_eq!(ck.best_epoch, Some(4));

    let mut ck = Checkpoint::new(None);
    let saved: Vec<bool> = (0..4)
        .map(|e| ck.update(0.5, e + 1, &model).unwrap())
        .collect();
    assert_eq!(saved, vec![true, false, false, false]);
}

#[test]
fn checkpoint_reload_reproduces_validation_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.vitw");
    let (vc, mut tc) = overfit_config();
    tc.epochs = 6;
    tc.batch_size = 4;
    let train_set = synthetic_set(12, 5);
    let val_set = synthetic_set(6, 6);
    let out = train(
        ViTModel::init(vc.clone(), 3).unwrap(),
        &train_set,
        &val_set,
        &tc,
        Some(&path),
    )
    .unwrap();
    let best = out.history.best_val_acc.unwrap();
    let reloaded = weights::load_weights(&path, &vc, Default::default()).unwrap();
    assert_eq!(evaluate(&reloaded, &val_set).unwrap().accuracy, best);
    assert_eq!(evaluate(&out.best_model, &val_set).unwrap().accuracy, best);
}

#[test]
fn identical_runs_give_identical_history() {
    let (vc, mut tc) = overfit_config();
    tc.epochs = 4;
    tc.batch_size = 4;
    let data = synthetic_set(10, 8);
    let run = || {
        train(
            ViTModel::init(vc.clone(), 3).unwrap(),
            &data,
            &data,
            &tc,
            None,
        )
        .unwrap()
        .history
        .to_csv()
    };
    assert_eq!(run(), run());
}
