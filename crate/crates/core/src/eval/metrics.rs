use crate::data::CLASS_NAMES;
use crate::error::{Error, Result};

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Empty matrix over the seven lesion classes.
    pub fn lesion() -> Self {
        ConfusionMatrix::new(CLASS_NAMES.iter().map(|s| s.to_string()).collect())
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::dim(format!(
                "confusion matrix must be {0}x{0}",
                labels.len()
            )));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth][pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let n = self.num_classes();
        if truth >= n || pred >= n {
            return Err(Error::Data(format!(
                "class id out of range 0..{n}: truth {truth}, prediction {pred}"
            )));
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// `(tp, tn, fp, fn)` of the one-vs-rest reduction for class `c`.
    pub fn binary(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.counts[c][c];
        let fn_ = self.row_sum(c) - tp;
        let fp = self.col_sum(c) - tp;
        let tn = self.total() - tp - fn_ - fp;
        (tp, tn, fp, fn_)
    }
}

pub fn confusion_matrix(preds: &[usize], labels: &[usize]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::lesion();
    for (&p, &t) in preds.iter().zip(labels) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Correct predictions over all predictions, as an exact ratio.
pub fn accuracy_counts(cm: &ConfusionMatrix) -> Result<(u64, u64)> {
    match cm.total() {
        0 => Err(Error::Data("accuracy of an empty confusion matrix".into())),
        n => Ok((cm.trace(), n)),
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let (k, n) = accuracy_counts(cm)?;
    Ok(k as f64 / n as f64)
}

/// `TP / (TP + FN)` for one class, as an exact ratio.
pub fn recall_counts(cm: &ConfusionMatrix, class: usize) -> Result<(u64, u64)> {
    if class >= cm.num_classes() {
        return Err(Error::Data(format!("class id {class} out of range")));
    }
    match cm.row_sum(class) {
        0 => Err(Error::UndefinedRecall {
            class: cm.labels[class].clone(),
        }),
        n => Ok((cm.get(class, class), n)),
    }
}

pub fn recall(cm: &ConfusionMatrix, class: usize) -> Result<f64> {
    let (k, n) = recall_counts(cm, class)?;
    Ok(k as f64 / n as f64)
}

/// Percentage of `num/den` rounded half-up to two decimals, computed in
/// integers so ties round exactly.
pub fn percent_hundredths(num: u64, den: u64) -> u64 {
    let q = u128::from(num) * 10_000;
    let d = u128::from(den);
    ((2 * q + d) / (2 * d)) as u64
}

pub fn format_hundredths(h: u64) -> String {
    format!("{}.{:02}%", h / 100, h % 100)
}

pub fn format_percent(num: u64, den: u64) -> String {
    format_hundredths(percent_hundredths(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_shifted() {
        let labels: Vec<usize> = (0..10).map(|i| i % 7).collect();
        let cm = confusion_matrix(&labels, &labels).unwrap();
        assert_eq!((cm.trace(), cm.total()), (10, 10));
        assert_eq!(accuracy(&cm).unwrap(), 1.0);

        let shifted: Vec<usize> = labels.iter().map(|l| (l + 1) % 7).collect();
        assert_eq!(confusion_matrix(&shifted, &labels).unwrap().trace(), 0);
        assert!(confusion_matrix(&[7], &[0]).is_err());
        assert!(confusion_matrix(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn melanoma_recalls() {
        let mut cm = ConfusionMatrix::lesion();
        for i in 0..41 {
            cm.add(4, if i < 24 { 4 } else { 5 }).unwrap();
        }
        let (k, n) = recall_counts(&cm, 4).unwrap();
        assert_eq!(format_percent(k, n), "58.54%");
        assert_eq!(format_percent(23, 41), "56.10%");
        assert!(matches!(recall(&cm, 0), Err(Error::UndefinedRecall { .. })));
        assert_eq!(
            recall(
                &ConfusionMatrix::from_counts(cm.labels().to_vec(), {
                    let mut c = vec![vec![0; 7]; 7];
                    c[2][3] = 5;
                    c
                })
                .unwrap(),
                2
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(format_percent(1, 8), "12.50%");
        assert_eq!(format_percent(1, 80000), "0.00%");
        assert_eq!(format_percent(1, 20000), "0.01%");
        assert_eq!(format_percent(61, 100), "61.00%");
        assert_eq!(format_percent(1, 1), "100.00%");
        assert!(accuracy(&ConfusionMatrix::lesion()).is_err());
    }
}
