//! Fine-tuning loop, optimizers and the checkpoint, learning-rate and
//! early-stopping callbacks.

pub mod callbacks;
pub mod config;
pub mod history;
pub mod optim;
pub mod trainer;

pub use callbacks::{step_decay_lr, CallbackAction, Checkpoint, EarlyStopping, ReduceLrOnPlateau};
pub use config::{L2Scope, LrPolicy, OptimizerKind, PlateauConfig, StepDecayConfig, TrainConfig};
pub use history::{EpochRecord, History, HISTORY_COLUMNS};
pub use optim::{adam_step, sgd_step, AdamHyper, AdamState, Optimizer};
pub use trainer::{
    epoch_order, evaluate, l2_targets, onehot, train, train_step, Evaluation, StepStats,
    TrainOutcome,
};
