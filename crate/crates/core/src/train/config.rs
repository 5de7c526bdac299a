use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.01,
            OptimizerKind::Adam => 0.001,
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::Config(format!("unknown optimizer '{s}' (sgd|adam)"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrPolicy {
    Plateau,
    Scheduler,
    None,
}

impl FromStr for LrPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plateau" => Ok(LrPolicy::Plateau),
            "scheduler" | "step" => Ok(LrPolicy::Scheduler),
            "none" => Ok(LrPolicy::None),
            _ => Err(Error::Config(format!(
                "unknown lr policy '{s}' (plateau|scheduler|none)"
            ))),
        }
    }
}

impl fmt::Display for LrPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrPolicy::Plateau => "plateau",
            LrPolicy::Scheduler => "scheduler",
            LrPolicy::None => "none",
        })
    }
}

/// Which parameters the L2 penalty covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L2Scope {
    /// Dense weight matrices of the classification head.
    Head,
    /// Every weight matrix, backbone included.
    All,
}

impl FromStr for L2Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "head" => Ok(L2Scope::Head),
            "all" => Ok(L2Scope::All),
            _ => Err(Error::Config(format!("unknown l2 scope '{s}' (head|all)"))),
        }
    }
}

impl fmt::Display for L2Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            L2Scope::Head => "head",
            L2Scope::All => "all",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    pub patience: usize,
    pub factor: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            patience: 3,
            factor: 0.1,
            min_lr: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecayConfig {
    pub every: usize,
    pub factor: f64,
}

impl Default for StepDecayConfig {
    fn default() -> Self {
        StepDecayConfig {
            every: 5,
            factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2_lambda: f64,
    pub l2_scope: L2Scope,
    pub lr_policy: LrPolicy,
    pub plateau: PlateauConfig,
    pub step_decay: StepDecayConfig,
    /// Zero disables early stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub freeze_backbone: bool,
    /// Optional cap on optimizer steps per epoch.
    pub steps_per_epoch: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::for_optimizer(OptimizerKind::Sgd)
    }
}

impl TrainConfig {
    pub fn for_optimizer(optimizer: OptimizerKind) -> Self {
        TrainConfig {
            optimizer,
            learning_rate: optimizer.default_learning_rate(),
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-7,
            batch_size: 16,
            epochs: 20,
            l2_lambda: 0.0,
            l2_scope: L2Scope::Head,
            lr_policy: LrPolicy::Plateau,
            plateau: PlateauConfig::default(),
            step_decay: StepDecayConfig::default(),
            early_stop_patience: 5,
            seed: 0,
            freeze_backbone: false,
            steps_per_epoch: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be finite and nonnegative");
        }
        let p = &self.plateau;
        if p.patience == 0 || !(p.factor > 0.0 && p.factor < 1.0) || !(p.min_lr >= 0.0) {
            return bad("plateau needs patience >= 1, factor in (0, 1) and min_lr >= 0");
        }
        let s = &self.step_decay;
        if s.every == 0 || !(s.factor > 0.0 && s.factor <= 1.0) {
            return bad("step decay needs every >= 1 and factor in (0, 1]");
        }
        if self.steps_per_epoch == Some(0) {
            return bad("steps_per_epoch must be at least 1");
        }
        Ok(())
    }
}
