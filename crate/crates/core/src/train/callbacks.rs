use std::path::{Path, PathBuf};

use super::config::{PlateauConfig, StepDecayConfig};
use crate::error::Result;
use crate::model::{weights::save_weights, ViTModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallbackAction {
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement
/// in validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub wait: usize,
    pub stopped: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            wait: 0,
            stopped: false,
        }
    }

    pub fn update(&mut self, val_loss: f64) -> CallbackAction {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        if self.patience > 0 && self.wait >= self.patience {
            self.stopped = true;
        }
        if self.stopped {
            CallbackAction::Stop
        } else {
            CallbackAction::Continue
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// non-improving epochs, never going below `min_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceLrOnPlateau {
    pub config: PlateauConfig,
    pub best: f64,
    pub wait: usize,
    pub lr: f64,
}

impl ReduceLrOnPlateau {
    pub fn new(config: PlateauConfig, lr: f64) -> Self {
        ReduceLrOnPlateau {
            config,
            best: f64::INFINITY,
            wait: 0,
            lr: lr.max(config.min_lr),
        }
    }

    pub fn update(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best {
            self.best = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.config.patience {
                self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Learning rate for 0-based `epoch` under step decay.
pub fn step_decay_lr(base: f64, config: &StepDecayConfig, epoch: usize) -> f64 {
    base * config.factor.powi((epoch / config.every) as i32)
}

/// Saves the model whenever validation accuracy strictly improves.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub path: Option<PathBuf>,
    pub best_acc: f64,
    pub best_epoch: Option<usize>,
}

impl Checkpoint {
    pub fn new(path: Option<&Path>) -> Self {
        Checkpoint {
            path: path.map(Path::to_path_buf),
            best_acc: f64::NEG_INFINITY,
            best_epoch: None,
        }
    }

    pub fn improves(&self, val_acc: f64) -> bool {
        val_acc > self.best_acc
    }

    /// Records the epoch and writes the file when `val_acc` is a new best.
    /// The best is updated even if the write fails, so the error can be
    /// reported without stopping training.
    pub fn update(&mut self, val_acc: f64, epoch: usize, model: &ViTModel) -> Result<bool> {
        if !self.improves(val_acc) {
            return Ok(false);
        }
        self.best_acc = val_acc;
        self.best_epoch = Some(epoch);
        if let Some(p) = &self.path {
            save_weights(model, p)?;
        }
        Ok(true)
    }
}
