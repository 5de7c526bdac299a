//! The Vision Transformer, its configurations, and weight persistence.

mod config;
mod params;
mod patch;
mod vit;
pub mod weights;

pub use config::{
    ConfigName, HeadInput, ViTConfig, DEFAULT_DROPOUT, DEFAULT_HEAD_NEURONS, DEFAULT_IMAGE_SIZE,
    NUM_CLASSES,
};
pub use params::{Param, ParamData, ParamStore, Precision};
pub use patch::{patchify, patchify_batch};
pub use vit::{is_head_param, AttentionRecord, Bindings, ForwardOutput, Init, ParamSpec, ViTModel};
pub use weights::{load_weights, save_weights, LoadOptions};
