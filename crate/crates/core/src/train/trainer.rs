use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::callbacks::{
    step_decay_lr, CallbackAction, Checkpoint, EarlyStopping, ReduceLrOnPlateau,
};
use super::config::{L2Scope, LrPolicy, TrainConfig};
use super::history::{EpochRecord, History};
use super::optim::Optimizer;
use crate::data::ImageSet;
use crate::error::{Error, Result};
use crate::model::{is_head_param, ViTModel};
use crate::tensor::{Graph, Mode, Tensor};

const EVAL_CHUNK: usize = 32;
const NOISE_SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn onehot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut d = vec![0.0; labels.len() * classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Data(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        d[i * classes + y] = 1.0;
    }
    Tensor::new(vec![labels.len(), classes], d)
}

/// Names of the weight matrices the L2 penalty applies to.
pub fn l2_targets(model: &ViTModel, scope: L2Scope) -> Vec<String> {
    model
        .params()
        .iter()
        .filter(|(n, p)| {
            let last = n.rsplit('.').next().unwrap_or(n);
            p.trainable
                && p.shape.len() == 2
                && last.starts_with('w')
                && (scope == L2Scope::All || is_head_param(n))
        })
        .map(|(n, _)| n.to_string())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

/// One optimizer step on a batch: train-mode forward, cross-entropy plus
/// optional L2, backward, update, and running-statistics refresh.
pub fn train_step<R: Rng + ?Sized>(
    model: &mut ViTModel,
    optimizer: &mut Optimizer,
    config: &TrainConfig,
    images: &Tensor,
    labels: &[usize],
    lr: f64,
    rng: &mut R,
) -> Result<StepStats> {
    let mut g = Graph::new();
    let freeze = config.freeze_backbone;
    let b = model.bind(&mut g, |n| !freeze || is_head_param(n));
    let out = model.forward(&mut g, &b, images, Mode::Train, false, rng)?;
    let target = onehot(labels, model.config().num_classes)?;
    let mut loss = g.softmax_cross_entropy(out.logits, &target)?;
    if config.l2_lambda > 0.0 {
        for name in l2_targets(model, config.l2_scope) {
            let sq = g.sum_squares(b.get(&name)?)?;
            let pen = g.scale(sq, config.l2_lambda)?;
            loss = g.add(loss, pen)?;
        }
    }
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    g.backward(loss)?;
    let grads: Vec<(String, Vec<f64>)> = b
        .iter()
        .filter_map(|(n, v)| g.grad(v).map(|t| (n.to_string(), t.data().to_vec())))
        .collect();
    let correct = g
        .value(out.probs)
        .argmax_rows()
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    optimizer.step(model.params_mut(), &grads, lr)?;
    model.apply_bn_updates(&out.bn_updates)?;
    Ok(StepStats {
        loss: value,
        correct,
        count: labels.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Mean categorical cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// `[N, classes]` row-major.
    pub probs: Vec<f64>,
}

/// Eval-mode pass over a whole set.
pub fn evaluate(model: &ViTModel, set: &ImageSet) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    let classes = model.config().num_classes;
    let mut probs = Vec::with_capacity(set.len() * classes);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (images, _) = set.batch(chunk);
        probs.extend_from_slice(model.predict(&images)?.data());
    }
    let p = Tensor::new(vec![set.len(), classes], probs)?;
    let predictions = p.argmax_rows();
    let labels = set.labels();
    let loss = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -p.data()[i * classes + y].max(1e-12).ln())
        .sum::<f64>()
        / set.len() as f64;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(Evaluation {
        loss,
        accuracy: correct as f64 / set.len() as f64,
        predictions,
        probs: p.into_data(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last completed epoch.
    pub model: ViTModel,
    /// Parameters at the best validation accuracy.
    pub best_model: ViTModel,
    pub checkpoint: Option<PathBuf>,
    pub history: History,
}

/// Shuffled order of training samples for a 0-based epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Runs the training loop. After every epoch the callbacks run in order:
/// checkpoint on validation accuracy, learning-rate policy, early stopping
/// on validation loss.
///
/// A trailing batch of one sample is skipped since train-mode batch
/// normalization needs at least two.
pub fn train(
    mut model: ViTModel,
    train_set: &ImageSet,
    val_set: &ImageSet,
    config: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let size = model.config().image_size;
    for (name, set) in [("training", train_set), ("validation", val_set)] {
        if set.is_empty() {
            return Err(Error::Data(format!("{name} set is empty")));
        }
        if set.size() != size {
            return Err(Error::dim(format!(
                "{name} images are {0}x{0}, model expects {size}x{size}",
                set.size()
            )));
        }
    }
    if train_set.len() < 2 {
        return Err(Error::Data("training needs at least 2 samples".into()));
    }

    let mut optimizer = Optimizer::new(config);
    let mut ckpt = Checkpoint::new(checkpoint);
    let mut plateau = ReduceLrOnPlateau::new(config.plateau, config.learning_rate);
    let mut early = EarlyStopping::new(config.early_stop_patience);
    let mut lr = config.learning_rate;
    let mut history = History::default();
    let mut best_model = model.clone();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = epoch_order(train_set.len(), config.seed, epoch);
        let mut noise = ChaCha8Rng::seed_from_u64(config.seed ^ NOISE_SEED_MIX);
        noise.set_stream(epoch as u64);

        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        let batches = order.chunks(config.batch_size).filter(|c| c.len() >= 2);
        for (bi, idx) in batches
            .take(config.steps_per_epoch.unwrap_or(usize::MAX))
            .enumerate()
        {
            let (images, labels) = train_set.batch(idx);
            let stats = match train_step(
                &mut model,
                &mut optimizer,
                config,
                &images,
                &labels,
                lr,
                &mut noise,
            ) {
                Err(Error::NonFinite { .. }) => {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        batch: bi + 1,
                    })
                }
                other => other?,
            };
            loss_sum += stats.loss * stats.count as f64;
            correct += stats.correct;
            seen += stats.count;
        }
        let val = evaluate(&model, val_set)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            train_acc: correct as f64 / seen as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {}: loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4} lr {}",
            record.epoch,
            record.train_loss,
            record.train_acc,
            record.val_loss,
            record.val_acc,
            record.lr
        );
        history.epochs.push(record);

        let improved = ckpt.improves(val.accuracy);
        if let Err(e) = ckpt.update(val.accuracy, epoch + 1, &model) {
            let msg = format!("epoch {}: checkpoint not saved: {e}", epoch + 1);
            log::warn!("{msg}");
            history.warnings.push(msg);
        }
        if improved {
            best_model = model.clone();
        }

        lr = match config.lr_policy {
            LrPolicy::Plateau => plateau.update(val.loss),
            LrPolicy::Scheduler => {
                step_decay_lr(config.learning_rate, &config.step_decay, epoch + 1)
            }
            LrPolicy::None => lr,
        };

        if early.update(val.loss) == CallbackAction::Stop {
            history.stopped_early = true;
            log::info!("early stopping after epoch {}", epoch + 1);
            break;
        }
    }
    history.best_epoch = ckpt.best_epoch;
    history.best_val_acc = ckpt.best_epoch.map(|_| ckpt.best_acc);
    Ok(TrainOutcome {
        model,
        best_model,
        checkpoint: ckpt.path.filter(|p| p.is_file()),
        history,
    })
}
