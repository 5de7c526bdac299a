//! Confusion matrices, accuracy and per-class recall, and report
//! formatting.

pub mod metrics;
pub mod report;

pub use metrics::{
    accuracy, accuracy_counts, confusion_matrix, format_hundredths, format_percent,
    percent_hundredths, recall, recall_counts, ConfusionMatrix,
};
pub use report::{
    ablation_table, comparison_table, reference_entries, report, AblationRow, ComparisonEntry,
    ReferenceRow, Report, ABLATION_COLUMNS, REFERENCE_ROWS,
};
