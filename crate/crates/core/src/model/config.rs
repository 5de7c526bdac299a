use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Activation;

/// Named architecture presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigName {
    L16,
    L32,
    B16,
    B32,
    Custom,
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfigName::L16 => "L16",
            ConfigName::L32 => "L32",
            ConfigName::B16 => "B16",
            ConfigName::B32 => "B32",
            ConfigName::Custom => "custom",
        })
    }
}

/// What the classification head flattens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInput {
    /// All `N+1` tokens, `(B, N+1, D) → (B, (N+1)·D)`.
    Sequence,
    /// Only the class token, `(B, D)`.
    ClassToken,
}

impl FromStr for HeadInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequence" => Ok(HeadInput::Sequence),
            "cls" | "class_token" => Ok(HeadInput::ClassToken),
            other => Err(Error::Config(format!(
                "unknown head input '{other}' (sequence|cls)"
            ))),
        }
    }
}

impl fmt::Display for HeadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadInput::Sequence => "sequence",
            HeadInput::ClassToken => "cls",
        })
    }
}

pub const NUM_CLASSES: usize = 7;
pub const DEFAULT_IMAGE_SIZE: usize = 224;
pub const DEFAULT_HEAD_NEURONS: usize = 28;
pub const DEFAULT_DROPOUT: f64 = 0.5;

/// Architecture hyperparameters of the backbone and the classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct ViTConfig {
    pub name: ConfigName,
    pub image_size: usize,
    pub patch_size: usize,
    pub hidden_dim: usize,
    pub mlp_dim: usize,
    pub num_heads: usize,
    pub depth: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub head_neurons: usize,
    pub head_activation: Activation,
    pub head_input: HeadInput,
}

impl ViTConfig {
    /// Preset lookup by name: `L16`, `L32`, `B16`, `B32` (case-insensitive,
    /// optional `ViT_` prefix). `tiny` gives the desk-scale test model.
    pub fn preset(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_uppercase();
        let key = key.strip_prefix("VIT_").unwrap_or(&key);
        let (name, patch, large) = match key {
            "L16" => (ConfigName::L16, 16, true),
            "L32" => (ConfigName::L32, 32, true),
            "B16" => (ConfigName::B16, 16, false),
            "B32" => (ConfigName::B32, 32, false),
            "TINY" => return Ok(Self::tiny()),
            _ => {
                return Err(Error::Config(format!(
                    "unknown model configuration '{name}'"
                )))
            }
        };
        let (hidden_dim, mlp_dim, num_heads, depth) = if large {
            (1024, 4096, 16, 24)
        } else {
            (768, 3072, 12, 12)
        };
        Ok(ViTConfig {
            name,
            image_size: DEFAULT_IMAGE_SIZE,
            patch_size: patch,
            hidden_dim,
            mlp_dim,
            num_heads,
            depth,
            num_classes: NUM_CLASSES,
            dropout_rate: DEFAULT_DROPOUT,
            head_neurons: DEFAULT_HEAD_NEURONS,
            head_activation: Activation::Relu,
            head_input: HeadInput::Sequence,
        })
    }

    /// 8×8 images, 4×4 patches, width 8, two heads, one block.
    pub fn tiny() -> Self {
        ViTConfig {
            name: ConfigName::Custom,
            image_size: 8,
            patch_size: 4,
            hidden_dim: 8,
            mlp_dim: 16,
            num_heads: 2,
            depth: 1,
            num_classes: NUM_CLASSES,
            dropout_rate: DEFAULT_DROPOUT,
            head_neurons: DEFAULT_HEAD_NEURONS,
            head_activation: Activation::Relu,
            head_input: HeadInput::Sequence,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("hidden_dim", self.hidden_dim),
            ("mlp_dim", self.mlp_dim),
            ("num_heads", self.num_heads),
            ("depth", self.depth),
            ("num_classes", self.num_classes),
            ("head_neurons", self.head_neurons),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden dim {} is not divisible by {} heads",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Tokens inside the encoder: patches plus the class token.
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    /// Length of one flattened patch (`patch² · 3`).
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    /// Width of the flattened vector entering the classification head.
    pub fn head_input_dim(&self) -> usize {
        match self.head_input {
            HeadInput::Sequence => self.seq_len() * self.hidden_dim,
            HeadInput::ClassToken => self.hidden_dim,
        }
    }

    /// Trainable parameter count from the closed-form layer sizes.
    pub fn param_count(&self, include_head: bool) -> usize {
        let d = self.hidden_dim;
        let m = self.mlp_dim;
        let embed = self.patch_dim() * d + d;
        let cls = d;
        let pos = self.seq_len() * d;
        let norms = 2 * (2 * d);
        let attention = 4 * (d * d + d);
        let mlp = (d * m + m) + (m * d + d);
        let block = norms + attention + mlp;
        let final_ln = 2 * d;
        let backbone = embed + cls + pos + self.depth * block + final_ln;
        if !include_head {
            return backbone;
        }
        let f = self.head_input_dim();
        let h = self.head_neurons;
        let c = self.num_classes;
        let head = 2 * f + (f * h + h) + 2 * h + (h * c + c);
        backbone + head
    }
}
