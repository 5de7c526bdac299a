//! Vision Transformer engine for dermatoscopic lesion classification.
//!
//! The crate is organized along the pipeline: [`data`] ingests and
//! augments lesion images, [`model`] defines the ViT and its classification
//! head on top of the [`tensor`] autodiff core, [`train`] fine-tunes it with
//! callbacks, [`eval`] turns predictions into confusion matrices and
//! reports, and [`attention`] renders saliency maps from captured
//! attention weights.

pub mod attention;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
