//! Metadata ingestion, cleansing, lesion-grouped splitting, class-balancing
//! augmentation, exploratory statistics and image IO.

pub mod augment;
pub mod dataset;
pub mod image;
pub mod manifest;
pub mod metadata;
pub mod split;
pub mod stats;

pub use augment::{
    augment_class_balance, transform_image, AugmentParams, AugmentRanges, SyntheticSample,
};
pub use dataset::{load_split, ImageSet};
pub use manifest::{build_manifest, read_manifest, write_manifest, ManifestEntry};
pub use metadata::{
    cleanse, cleanse_with, load_metadata, read_metadata, CleanseReport, CleanseRule, Diagnosis,
    LesionRecord, Sex, CLASS_NAMES,
};
pub use split::{split, SplitDataset, SplitName, SplitRatios};
pub use stats::{stats_report, CountTable, StatsReport};
