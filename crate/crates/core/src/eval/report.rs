use std::fmt::Write as _;

use super::metrics::{
    accuracy_counts, format_hundredths, percent_hundredths, recall_counts, ConfusionMatrix,
};
use crate::data::Diagnosis;
use crate::error::Result;

/// A reference comparison result, in hundredths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceRow {
    pub name: &'static str,
    pub accuracy: u64,
    pub mel_recall: u64,
}

pub const REFERENCE_ROWS: [ReferenceRow; 5] = [
    ReferenceRow {
        name: "DTC",
        accuracy: 6106,
        mel_recall: 2478,
    },
    ReferenceRow {
        name: "KNN",
        accuracy: 6545,
        mel_recall: 619,
    },
    ReferenceRow {
        name: "ViT_B32",
        accuracy: 7473,
        mel_recall: 4103,
    },
    ReferenceRow {
        name: "ViT_B16",
        accuracy: 8188,
        mel_recall: 1795,
    },
    ReferenceRow {
        name: "CNN",
        accuracy: 9051,
        mel_recall: 5757,
    },
];

/// One column of the comparison table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonEntry {
    pub name: String,
    /// Hundredths of a percent.
    pub accuracy: u64,
    pub mel_recall: Option<u64>,
    pub reference: bool,
}

impl ComparisonEntry {
    pub fn measured(name: &str, cm: &ConfusionMatrix) -> Result<Self> {
        let (k, n) = accuracy_counts(cm)?;
        let mel = recall_counts(cm, Diagnosis::Mel.index())
            .ok()
            .map(|(a, b)| percent_hundredths(a, b));
        Ok(ComparisonEntry {
            name: name.into(),
            accuracy: percent_hundredths(k, n),
            mel_recall: mel,
            reference: false,
        })
    }
}

impl From<ReferenceRow> for ComparisonEntry {
    fn from(r: ReferenceRow) -> Self {
        ComparisonEntry {
            name: r.name.into(),
            accuracy: r.accuracy,
            mel_recall: Some(r.mel_recall),
            reference: true,
        }
    }
}

pub fn reference_entries() -> Vec<ComparisonEntry> {
    REFERENCE_ROWS
        .iter()
        .copied()
        .map(ComparisonEntry::from)
        .collect()
}

fn recall_text(cm: &ConfusionMatrix, c: usize) -> String {
    match recall_counts(cm, c) {
        Ok((k, n)) => format_hundredths(percent_hundredths(k, n)),
        Err(_) => "n/a".into(),
    }
}

/// Rendered evaluation outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
    pub grid: String,
}

/// The confusion matrix as aligned text, per-class recall, overall
/// accuracy, and a comparison table with the measured model next to
/// `extra` entries.
pub fn report(cm: &ConfusionMatrix, model_name: &str, extra: &[ComparisonEntry]) -> Result<Report> {
    let (k, n) = accuracy_counts(cm)?;
    let acc = format_hundredths(percent_hundredths(k, n));
    let labels = cm.labels();
    let w = labels.iter().map(String::len).max().unwrap_or(4).max(6);
    let cw = cm
        .counts()
        .iter()
        .flatten()
        .map(|v| v.to_string().len())
        .max()
        .unwrap_or(1)
        .max(w);

    let mut text = format!(
        "Confusion matrix (rows = true class, columns = predicted class)\n{:<w$}",
        ""
    );
    for l in labels {
        let _ = write!(text, " {l:>cw$}");
    }
    text.push('\n');
    for (l, row) in labels.iter().zip(cm.counts()) {
        let _ = write!(text, "{l:<w$}");
        for v in row {
            let _ = write!(text, " {v:>cw$}");
        }
        text.push('\n');
    }
    let _ = write!(text, "\n{:<w$} {:>7} {:>8}\n", "class", "support", "recall");
    for (c, l) in labels.iter().enumerate() {
        let _ = writeln!(
            text,
            "{l:<w$} {:>7} {:>8}",
            cm.row_sum(c),
            recall_text(cm, c)
        );
    }
    let _ = writeln!(text, "\nAccuracy: {acc} ({k}/{n})\n");

    let mut entries = vec![ComparisonEntry::measured(model_name, cm)?];
    entries.extend(extra.iter().cloned());
    text.push_str(&comparison_table(&entries));

    let mut csv = "label,support,recall\n".to_string();
    for (c, l) in labels.iter().enumerate() {
        let _ = writeln!(csv, "{l},{},{}", cm.row_sum(c), recall_text(cm, c));
    }
    let _ = writeln!(csv, "accuracy,{n},{acc}");

    let mut grid = String::new();
    for row in cm.counts() {
        let line: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(grid, "{}", line.join(" "));
    }
    Ok(Report { text, csv, grid })
}

/// Models as columns with Accuracy and melanoma Recall rows.
pub fn comparison_table(entries: &[ComparisonEntry]) -> String {
    let cells: Vec<[String; 4]> = entries
        .iter()
        .map(|e| {
            [
                e.name.clone(),
                format_hundredths(e.accuracy),
                e.mel_recall.map_or("n/a".into(), format_hundredths),
                if e.reference {
                    "reference".into()
                } else {
                    "measured".into()
                },
            ]
        })
        .collect();
    let rows = ["Model", "Accuracy", "Recall (mel)", "Source"];
    let w0 = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(s, "{r:<w0$}");
        for c in &cells {
            let w = c.iter().map(String::len).max().unwrap_or(0);
            let _ = write!(s, "  {:>w$}", c[i]);
        }
        s.push('\n');
    }
    s
}

/// One ablation run in the standard column layout.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub neurons: usize,
    pub activation: String,
    pub l2: bool,
    pub dropout: bool,
    pub lr_scheduler: bool,
    pub reduce_lr_on_plateau: bool,
    pub optimizer: String,
    /// Correct and total test predictions.
    pub correct: u64,
    pub total: u64,
}

pub const ABLATION_COLUMNS: [&str; 11] = [
    "Config",
    "Batch Size",
    "Epochs",
    "Neurons",
    "Activation Function",
    "L2 Regularization",
    "Dropout Layer",
    "LR Scheduler",
    "ReduceLR On Plateau",
    "Optimizer",
    "Accuracy",
];

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mark = |b: bool| if b { "yes" } else { "no" }.to_string();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.batch_size.to_string(),
                r.epochs.to_string(),
                r.neurons.to_string(),
                r.activation.to_uppercase(),
                mark(r.l2),
                mark(r.dropout),
                mark(r.lr_scheduler),
                mark(r.reduce_lr_on_plateau),
                r.optimizer.to_uppercase(),
                if r.total == 0 {
                    "n/a".into()
                } else {
                    format_hundredths(percent_hundredths(r.correct, r.total))
                },
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..ABLATION_COLUMNS.len())
        .map(|j| {
            body.iter()
                .map(|r| r[j].len())
                .chain([ABLATION_COLUMNS[j].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<String>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        parts.join(" | ").trim_end().to_string()
    };
    let mut s = line(ABLATION_COLUMNS.iter().map(|c| c.to_string()).collect());
    s.push('\n');
    s.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    s.push('\n');
    for r in body {
        s.push_str(&line(r));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::confusion_matrix;

    #[test]
    fn perfect_report() {
        let labels: Vec<usize> = (0..14).map(|i| i % 7).collect();
        let cm = confusion_matrix(&labels, &labels).unwrap();
        let r = report(&cm, "tiny", &reference_entries()).unwrap();
        assert!(r.text.contains("Accuracy: 100.00%"));
        assert_eq!(r.csv.lines().count(), 9);
        assert!(r.csv.ends_with("accuracy,14,100.00%\n"));
        assert_eq!(r.grid.lines().count(), 7);
        for want in [
            "61.06%", "24.78%", "65.45%", "6.19%", "74.73%", "41.03%", "81.88%", "17.95%",
            "90.51%", "57.57%",
        ] {
            assert!(r.text.contains(want), "{want}");
        }
        assert!(r.text.contains("reference"));
    }

    #[test]
    fn undefined_recall_is_na() {
        let cm = confusion_matrix(&[0, 1], &[0, 0]).unwrap();
        let r = report(&cm, "m", &[]).unwrap();
        assert!(r.csv.contains("mel,0,n/a"));
        assert!(r.text.contains("50.00%"));
    }

    #[test]
    fn ablation_layout() {
        let row = AblationRow {
            name: "a.cfg".into(),
            batch_size: 16,
            epochs: 20,
            neurons: 28,
            activation: "relu".into(),
            l2: false,
            dropout: true,
            lr_scheduler: false,
            reduce_lr_on_plateau: true,
            optimizer: "sgd".into(),
            correct: 9279,
            total: 10000,
        };
        let t = ablation_table(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Config | Batch Size | Epochs"));
        assert!(lines[2].contains("RELU") && lines[2].ends_with("92.79%"));
    }
}
